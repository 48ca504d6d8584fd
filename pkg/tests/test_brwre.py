import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from roughsbm.brwre import (constant_rates, laplace_duality_experiment, make_lattice, point_laplace,
                            point_mass, simulate, solve_discrete_dual, _killed_dual)
from roughsbm.environment import build_environment, zero_environment
from roughsbm.grid import DomainError, GridSpec
from roughsbm.mollifier import build_kit

G = GridSpec(4.0, 64)


def lattice_generator(M, n):
    """Dense five-point Laplacian on the periodic M x M lattice of spacing 1/n."""
    one = np.zeros((M, M))
    for i in range(M):
        one[i, i] = -2
        one[i, (i + 1) % M] = one[i, (i - 1) % M] = 1
    eye = np.eye(M)
    return n * n * (np.kron(one, eye) + np.kron(eye, one))


def test_lattice_geometry():
    lat = make_lattice(G, 4)
    assert lat.stride == 4 and lat.sites == 16 and lat.spacing == 0.25
    assert lat.index_of((0.0, 0.0)) == (8, 8)
    assert lat.radius(np.array([[8, 8], [10, 5]])).tolist() == [0.0, 0.75]
    with pytest.raises(DomainError):
        make_lattice(G, 3)
    with pytest.raises(DomainError):
        make_lattice(GridSpec(4.0, 64, boundary="dirichlet"), 4)


def test_pure_walk_keeps_population():
    rates = constant_rates(G, 4, 0.0)
    sim = simulate(rates, point_mass(rates.lattice, K=5), 1.0, seed=1, trials=50)
    assert np.all(sim.population == 5) and np.all(sim.final_count == 5)
    assert np.all(sim.radius[:, 0] == 0)
    assert np.all(np.diff(sim.radius, axis=1) >= 0)


def test_yule_mean():
    lam, T = 1.0, 1.0
    rates = constant_rates(G, 4, lam)
    sim = simulate(rates, point_mass(rates.lattice), T, seed=7, trials=4000)
    c = sim.final_count
    se = c.std(ddof=1) / np.sqrt(len(c))
    assert abs(c.mean() - np.exp(lam * T)) < 3 * se


def test_critical_branching_conserves_mean_mass():
    rates = constant_rates(G, 4, 0.0, kappa=2.0, K=4)
    sim = simulate(rates, point_mass(rates.lattice, K=4), 1.0, seed=3, trials=4000)
    m = sim.final_mass
    assert abs(m.mean() - 1.0) < 3 * m.std(ddof=1) / np.sqrt(len(m))


def test_dual_with_zero_test_function():
    rates = constant_rates(G, 4, 0.7, kappa=1.0)
    w = solve_discrete_dual(rates, np.zeros((16, 16)), 0.5)
    np.testing.assert_array_equal(w, 1.0)


def test_dual_without_branching_is_lattice_heat_flow(rng):
    rates = constant_rates(G, 4, 0.0)
    phi0 = rng.uniform(0, 2, (16, 16))
    T = 0.05
    w = solve_discrete_dual(rates, phi0, T)
    ref = 1 - (expm(T * lattice_generator(16, 4)) @ (1 - np.exp(-phi0)).ravel()).reshape(16, 16)
    np.testing.assert_allclose(w, ref, atol=1e-12)


def test_dual_riccati_for_constant_data():
    # V = 0, b = kappa K / 2: q' = -b q^2
    K, kappa, c, T = 3.0, 2.0, 1.5, 0.8
    rates = constant_rates(G, 4, 0.0, kappa=kappa, K=K)
    q = solve_discrete_dual(rates, np.full((16, 16), c), T, return_q=True)
    q0 = -np.expm1(-c / K)
    b = kappa * K / 2
    np.testing.assert_allclose(q, q0 / (1 + b * q0 * T), rtol=1e-12)
    val = point_laplace(rates, np.full((16, 16), c), T, (0.0, 0.0))
    assert val == pytest.approx((1 - q0 / (1 + b * q0 * T)) ** K, rel=1e-12)


def test_monte_carlo_matches_dual():
    rates = constant_rates(G, 4, 0.5, kappa=1.0, K=2)
    lat = rates.lattice
    x = lat.coords
    phi0 = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2))
    T = 0.5
    sim = simulate(rates, point_mass(lat, K=2), T, seed=11, trials=6000, phi0=phi0)
    mean, se = sim.laplace_estimate()
    dual = point_laplace(rates, phi0, T, (0.0, 0.0))
    assert abs(mean - dual) < 4 * se


def test_zero_time_all_routes_agree():
    grid = GridSpec(4.0, 128)
    env = zero_environment(grid, build_kit(grid))
    phi0 = lambda x, y: 0.5 + 0 * x
    rep = laplace_duality_experiment(env, 8, phi0, 0.0, 20, K=1)
    assert rep["dual"] == pytest.approx(np.exp(-0.5), rel=1e-14)
    assert rep["continuum"] == pytest.approx(np.exp(-0.5), rel=1e-14)
    assert rep["mc"] == pytest.approx(np.exp(-0.5), rel=1e-14)


def test_killed_dual_without_walls():
    rates = constant_rates(G, 4, 0.3, kappa=1.0)
    w = _killed_dual(rates, np.zeros((16, 16), bool), 0.5, steps_per_unit=200)
    np.testing.assert_allclose(w, 1.0)
    walls = rates.lattice.radius(np.stack(np.meshgrid(np.arange(16), np.arange(16), indexing="ij"), -1)) > 1
    w = _killed_dual(rates, walls, 0.5, steps_per_unit=200)
    assert np.all(w[walls] == 0) and 0 < w[8, 8] < 1


def test_simulate_validation():
    rates = constant_rates(G, 4, 0.0)
    other = make_lattice(G, 8)
    with pytest.raises(DomainError):
        simulate(rates, point_mass(other), 1.0)
    with pytest.raises(ValueError):
        simulate(rates, point_mass(rates.lattice), -1.0)


@settings(max_examples=15, deadline=None)
@given(v=st.floats(-3, 3), kappa=st.floats(0, 3), c=st.floats(0, 5), T=st.floats(0, 0.5))
def test_dual_is_a_probability(v, kappa, c, T):
    rates = constant_rates(G, 4, v, kappa=kappa)
    x = rates.lattice.coords
    phi0 = c * np.exp(-(x[:, None] ** 2 + x[None, :] ** 2))
    w = solve_discrete_dual(rates, phi0, T)
    assert np.all(w >= -1e-12) and np.all(w <= 1 + 1e-12)
