import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughsbm.environment import build_environment, zero_environment
from roughsbm.estimates import (BARRIER_CONSTANT, InvalidInputError, barrier_battery, barrier_bound,
                                barrier_check, box_sup_profile, build_U_field, fit_shrink_constant,
                                heat_battery, heat_gradient_check, interior_bound_check, noise_terms,
                                shrink_iteration, symbol_regularity, TREE_SIZE)
from roughsbm.grid import DomainError, GridSpec, central_gradient
from roughsbm.mollifier import build_kit
from roughsbm.norms import two_variable_holder
from roughsbm.pam import SemilinearProblem, SpaceTimeField, solve_imex

G = GridSpec(12.0, 128)


def field_of(values, grid):
    v = np.asarray(values, float)
    return SpaceTimeField(grid, np.arange(len(v)) * 0.1, v, v.max(axis=0), v.min(axis=0))


def test_bound_closed_form():
    b = barrier_bound(G, 4, 1.0)
    o = G.origin_index()
    assert b[o] == pytest.approx(28.0)
    i = G.index_of(3.5)
    d = 4 - G.coords[i]
    assert b[i, o[1]] == pytest.approx(28 * max(1 / d**2, 1.0))
    assert np.isinf(b[G.index_of(4.0), o[1]])
    assert BARRIER_CONSTANT == 28


def test_zero_source_zero_solution():
    u = solve_imex(SemilinearProblem(G, 2.0, np.zeros(G.shape), np.zeros(G.shape), T=0.2), 2e-3, "strang")
    rep = barrier_check(u, np.zeros(G.shape), 4)
    assert rep["u_sup"] == 0 and rep["violations"] == 0


def test_unit_source_caps_at_one():
    g = np.ones(G.shape)
    u = solve_imex(SemilinearProblem(G, 2.0, np.zeros(G.shape), g, T=1.0), 2e-3, "strang", laplacian="lattice")
    rep = barrier_check(u, g, 4)
    assert rep["violations"] == 0
    assert rep["u_sup"] <= 1.0
    assert rep["u_sup"] == pytest.approx(np.tanh(1.0), rel=1e-3)


def test_negative_input_rejected():
    u = field_of([np.zeros(G.shape), -np.ones(G.shape)], G)
    with pytest.raises(InvalidInputError):
        barrier_check(u, np.zeros(G.shape), 4)


def test_small_battery():
    rows = barrier_battery(GridSpec(16.0, 128), 4, n_draws=3, seed=1, T=0.5, dt=5e-3)
    assert sum(r["violations"] for r in rows) == 0


def test_symbols():
    assert TREE_SIZE == {"xi": 1, "IxiXi": 2, "xiX": 2}
    assert symbol_regularity(0.1) == {"xi": -1.1, "IxiXi": -0.2, "xiX": -0.1}


def test_noise_terms(env8, zero_env8):
    assert noise_terms(zero_env8, 2.0) == {"xi": 0.0, "IxiXi": 0.0, "xiX": 0.0}
    t = noise_terms(env8, 2.0, 0.1)
    raw = env8.noise_norms(2.0, 0.1)
    assert t["xi"] == pytest.approx(raw["xi"] ** (2 / 0.9))
    assert t["xiX"] == pytest.approx(raw["xiX"] ** (1 / 0.9))
    assert noise_terms(env8, 1.0)["xi"] <= t["xi"]


def test_box_profile():
    r = G.sup_radius()
    prof = box_sup_profile(field_of([r, 0.5 * r], G), 4)
    c = np.abs(G.coords)
    assert prof(0) == pytest.approx(c[c <= 4].max())
    assert prof(1) == pytest.approx(c[c <= 3].max())
    assert prof(4.5) == 0.0


def test_interior_without_forcing_is_zero():
    grid = GridSpec(24.0, 256)
    env = zero_environment(grid, build_kit(grid))
    rep = interior_bound_check(env, 2.0, 8, [1, 2, 4], [0], T=0.2, dt=2e-3, laplacian="lattice")
    assert all(row["sup"] == 0 for row in rep.rows)
    assert rep.nested and rep.K == 0


def test_shrink_constant_profile():
    prof = lambda R: 4.0
    tr = shrink_iteration(prof, 8, C0=1.5)
    inc = tr["increments"]
    np.testing.assert_allclose(inc, 2 * 1.5 / np.sqrt(4.0))
    assert tr["stop"] == "radius"


def test_shrink_smallness_stop():
    tr = shrink_iteration(lambda R: 1.0 / (1 + R) ** 2, 8, C0=0.5, noise_max=0.05)
    assert tr["stop"] == "smallness"
    assert tr["trace"][-1][1] < 0.05


def test_shrink_fit_on_inverse_square():
    prof = lambda R: 1.0 / (1.0 + R) ** 2
    C0 = fit_shrink_constant(prof, 8)
    rs = np.linspace(0, 8, 65)[:-1]
    for r in rs:
        for R in rs[(rs > 0) & (r + rs < 8)]:
            assert prof(r + R) <= max(2 * C0**2 / R**2, prof(r) / 2) * (1 + 1e-12)
    # worst case sits where M(r + R) = M(r) / 2, giving C0 = (sqrt(2) - 1) / 2
    assert C0 == pytest.approx((np.sqrt(2) - 1) / 2, rel=0.01)
    tr = shrink_iteration(prof, 8, C0=C0)
    assert tr["trace"][-1][0] > 0


def test_U_field_without_noise(zero_env8):
    g = zero_env8.grid
    x, y = g.mesh()
    u = np.exp(-(x**2 + y**2))
    U = build_U_field(u, zero_env8, 1.0, 0.25)
    px, py = U.base[:, 0][:, None], U.base[:, 1][:, None]
    ref = u[px + U.offsets[:, 0], py + U.offsets[:, 1]] - u[px, py]
    np.testing.assert_allclose(U.values, ref, atol=1e-15)
    assert np.all(U.values[:, U.offset_index((0, 0))] == 0)


def test_U_field_constant_u(env8):
    g = env8.grid
    c = 1.7
    U = build_U_field(np.full(g.shape, c), env8, 1.0, 0.25)
    px, py = U.base[:, 0][:, None], U.base[:, 1][:, None]
    I = env8.I_xi
    ref = -c * (I[px + U.offsets[:, 0], py + U.offsets[:, 1]] - I[px, py])
    np.testing.assert_allclose(U.values, ref, atol=1e-12)
    grad = central_gradient(I, g)
    b = U.base
    np.testing.assert_allclose(U.nu, -c * np.stack([grad[0][b[:, 0], b[:, 1]], grad[1][b[:, 0], b[:, 1]]], axis=1),
                               atol=1e-10)


def test_U_field_errors_and_norm(env8):
    g = env8.grid
    with pytest.raises(DomainError):
        build_U_field(np.zeros(g.shape), env8, 3.9, 0.5)
    x, y = g.mesh()
    u = np.exp(-(x**2 + y**2))
    rep = two_variable_holder(build_U_field(u, env8, 1.0, 0.5), 1.8, r=0.5)
    assert np.isfinite(rep.value) and rep.value > 0


def test_heat_gradient_zero_and_small_battery():
    grid = GridSpec(8.0, 128)
    zero = [{"L": 1.0, "draw": 0, "times": np.array([0.0, 1.0]), "values": np.zeros((2,) + grid.shape)}]
    rep = heat_gradient_check(zero, grid)
    assert rep["rows"][0]["gradient"] == 0 and rep["rows"][0]["oscillation"] == 0
    bat = heat_battery(grid, (0.5, 1.0), n_draws=3, seed=2, n_times=8)
    rep = heat_gradient_check(bat, grid)
    assert all(np.isfinite(v) and v > 0 for v in rep["K_by_L"].values())


@settings(max_examples=20, deadline=None)
@given(g_sup=st.floats(0, 1e4), n=st.floats(1, 5))
def test_bound_is_at_least_sqrt_source(g_sup, n):
    b = barrier_bound(G, n, g_sup)
    inside = np.isfinite(b)
    assert np.all(b[inside] >= 28 * np.sqrt(g_sup) * (1 - 1e-12))
    assert np.all(b[inside] >= 28 / n**2 * (1 - 1e-12))
