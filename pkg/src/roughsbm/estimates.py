"""Numerical checks of the a-priori estimates for the absorption equation.

Everything here consumes solver output and reports measured constants; no
constant is assumed except the explicit 28 of the barrier bound.
"""
from dataclasses import dataclass, field

import numpy as np

from .cutoffs import build_forcing
from .grid import DomainError, as_box, fft2, ifft2, laplacian_symbol, spectral_gradient
from .norms import TwoVariableField, _offsets
from .pam import SemilinearProblem, solve_imex

BARRIER_CONSTANT = 28.0

# tree sizes and regularities of the enhanced-noise symbols, as functions of eps
TREE_SIZE = {"xi": 1, "IxiXi": 2, "xiX": 2}


def symbol_regularity(eps):
    return {"xi": -1 - eps, "IxiXi": -2 * eps, "xiX": -eps}


class InvalidInputError(ValueError):
    pass


def barrier_bound(grid, n, g_sup):
    """``28 max(1 / dist^2, sqrt(g_sup))`` on P_n, +inf outside and on the boundary."""
    x, y = grid.mesh()
    dist = np.minimum.reduce([n - x, n + x, n - y, n + y])
    with np.errstate(divide="ignore"):
        wall = np.where(dist > 0, 1.0 / np.maximum(dist, 1e-300) ** 2, np.inf)
    return np.where(dist > 0, BARRIER_CONSTANT * np.maximum(wall, np.sqrt(g_sup)), np.inf)


def barrier_check(u, g, n, tol=1e-8):
    """Compare the running sup of ``u`` against the barrier on P_n.

    ``u`` is a SpaceTimeField solving ``(d_t - Lap) u = -u^2 + g`` on P_n from
    zero data; only the values of g inside P_n enter the bound.
    """
    grid = u.grid
    scale = max(float(np.abs(u.sup_over_time).max()), 1e-300)
    inside = grid.box_mask(n)
    if float(u.min_over_time[inside].min()) < -tol * scale:
        raise InvalidInputError("solution is negative beyond tolerance on P_n")
    g_sup = float(np.abs(np.asarray(g)[inside]).max())
    bound = barrier_bound(grid, n, g_sup)
    top = u.sup_over_time
    interior = inside & np.isfinite(bound)
    ratio = top[interior] / bound[interior]
    return {
        "n": n, "g_sup": g_sup, "u_sup": float(top[interior].max()),
        "violations": int((top[interior] > bound[interior]).sum()),
        "worst_ratio": float(ratio.max()),
        "worst_margin": float((bound[interior] - top[interior]).min()),
    }


def _smooth_random_field(grid, rng, cutoff=1.0):
    """Band-limited Gaussian field with unit sup norm."""
    from .grid import wavenumbers
    kx, ky = wavenumbers(grid)
    w = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    f = ifft2(w * np.exp(-(kx**2 + ky**2) / (2 * cutoff**2))).real
    return f / np.abs(f).max()


def barrier_battery(grid, n=4, n_draws=20, seed=0, T=1.0, dt=2e-3, outside=1e3, laplacian="lattice"):
    """Zero-data solves with random smooth ``g >= 0`` in P_n and a strong source outside.

    The outside source pushes the boundary values of P_n far above the
    interior scale, which is exactly what the barrier has to absorb.
    """
    rng = np.random.default_rng(seed)
    r = grid.sup_radius()
    rows = []
    for i in range(n_draws):
        amp = 10 ** rng.uniform(-2, 2)
        g_in = amp * _smooth_random_field(grid, rng) ** 2
        g = g_in + build_forcing(grid, n, outside * rng.uniform(0.1, 1.0)) * (r > n)
        prob = SemilinearProblem(grid, 2.0, np.zeros(grid.shape), g, T=T)
        u = solve_imex(prob, dt, scheme="strang", n_saves=2, laplacian=laplacian)
        rep = barrier_check(u, g, n)
        rep["draw"] = i
        rep["amplitude"] = amp
        rows.append(rep)
    return rows


@dataclass
class InteriorReport:
    n: float
    kappa: float
    T: float
    eps: float
    l_values: list
    m_values: list
    noise_terms: dict
    rows: list = field(default_factory=list)
    K: float = None
    slope: float = None
    slope_by_m: dict = field(default_factory=dict)
    m_change: float = None
    nested: bool = True

    @property
    def noise_max(self):
        return max(self.noise_terms.values()) if self.noise_terms else 0.0

    def passes(self, slope_max=-1.8, m_tol=0.05):
        ok = self.nested and self.m_change is not None and self.m_change < m_tol
        if self.slope is not None:
            ok = ok and self.slope <= slope_max
        return bool(ok)


def noise_terms(env, n, eps=0.1):
    """``||tau||_{n,|tau|}^{2/(n_tau (1-eps))}`` for the three symbols."""
    if env is None or not np.any(env.xi_alpha):
        return {k: 0.0 for k in TREE_SIZE}
    norms = env.noise_norms(n, eps)
    return {k: float(norms[k]) ** (2 / (TREE_SIZE[k] * (1 - eps))) for k in TREE_SIZE}


def box_sup_profile(u, n):
    """Function ``R -> sup_{t, |x| <= n - R} |u|`` built from the running sup."""
    r = u.grid.sup_radius().ravel()
    top = np.maximum(np.abs(u.sup_over_time), np.abs(u.min_over_time)).ravel()
    order = np.argsort(r, kind="stable")
    rs = r[order]
    cm = np.maximum.accumulate(top[order])

    def profile(R):
        k = np.searchsorted(rs, n - R + 1e-9, side="right")
        return float(cm[k - 1]) if k > 0 else 0.0
    return profile


def _fit_slope(ls, vals):
    ls, vals = np.asarray(ls, float), np.asarray(vals, float)
    ok = vals > 0
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(ls[ok]), np.log(vals[ok]), 1)[0])


def interior_solve(env, kappa, n, m, T, dt, scheme="strang", renormalize=True, laplacian="spectral"):
    """Zero-data solve with the annulus forcing placed just outside P_n."""
    grid = env.grid
    prob = SemilinearProblem(grid, kappa, np.zeros(grid.shape), build_forcing(grid, n, m), T=T,
                             env=env, renormalize=renormalize)
    return solve_imex(prob, dt, scheme=scheme, n_saves=2, laplacian=laplacian)


def interior_bound_check(env, kappa, n, l_values, m_values, T=1.0, dt=1e-3, eps=0.1,
                         scheme="strang", laplacian="spectral"):
    """Tabulate ``||u||_{C_T P_{n-l}}`` against ``max(1/l^2, noise terms)``."""
    terms = noise_terms(env, n, eps)
    rep = InteriorReport(n, kappa, T, eps, list(l_values), list(m_values), terms)
    sups = {}
    for m in m_values:
        u = interior_solve(env, kappa, n, m, T, dt, scheme, laplacian=laplacian)
        prof = box_sup_profile(u, n)
        vals = [prof(l) for l in l_values]
        rep.nested &= all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
        sups[m] = vals
        for l, v in zip(l_values, vals):
            rhs = max(1.0 / l**2, rep.noise_max)
            rep.rows.append({"m": m, "l": l, "sup": v, "rhs": rhs, "ratio": v / rhs})
        wall = [(l, v) for l, v in zip(l_values, vals) if 1.0 / l**2 >= rep.noise_max]
        if m > 0 and len(wall) >= 2:
            rep.slope_by_m[m] = _fit_slope(*zip(*wall))
    rep.K = max(r["ratio"] for r in rep.rows)
    slopes = [s for s in rep.slope_by_m.values() if s is not None]
    rep.slope = max(slopes) if slopes else None
    ms = sorted(m for m in m_values if m > 0)
    if len(ms) >= 2:
        a, b = sups[ms[-2]][-1], sups[ms[-1]][-1]
        rep.m_change = abs(b - a) / max(abs(b), 1e-300)
    return rep


def fit_shrink_constant(profile, n, n_samples=64):
    """Smallest C0 with ``M(r + R) <= max(2 C0^2 / R^2, M(r) / 2)`` on sampled (r, R)."""
    rs = np.linspace(0, n, n_samples + 1)[:-1]
    c2 = 0.0
    for r in rs:
        Mr = profile(r)
        for R in rs[rs > 0]:
            if r + R >= n:
                break
            v = profile(r + R)
            if v > 0.5 * Mr:
                c2 = max(c2, v * R * R / 2)
    return float(np.sqrt(c2))


def shrink_iteration(u, n, C0=None, c0=1.0, noise_max=0.0, tol=1e-9, max_steps=10000):
    """Trace of ``R_{i+1} = R_i + 2 C0 M(R_i)^{-1/2}`` with ``M(R) = ||u||_{C_T P_{n-R}}``.

    Stops once ``R > n``, or when ``c0 M(R_i) < noise_max`` (the smallness
    condition fails).  ``C0`` is fitted from the profile when not given.
    """
    profile = u if callable(u) else box_sup_profile(u, n)
    if C0 is None:
        C0 = fit_shrink_constant(profile, n)
    R, trace = 0.0, []
    stop = "radius"
    for _ in range(max_steps):
        M = profile(R)
        trace.append((R, M))
        if M <= 0:
            stop = "zero"
            break
        if c0 * M < noise_max:
            stop = "smallness"
            break
        R = R + 2 * C0 / np.sqrt(M)
        if R > n:
            break
    scaled = [M * R * R for R, M in trace if R > 0]
    halving = [(trace[i + 1][1] <= (0.5 + tol) * trace[i][1]) for i in range(len(trace) - 1)]
    return {"C0": C0, "trace": trace, "stop": stop,
            "increments": [b[0] - a[0] for a, b in zip(trace, trace[1:])],
            "scaled_max": max(scaled) if scaled else 0.0,
            "halving": bool(all(halving))}


def build_U_field(u, env, region, stencil_radius, max_side=24):
    """``U(x, xbar) = u(xbar) - u(x) - u(x)(I xi(xbar) - I xi(x))`` on sampled base points.

    ``u`` may carry a leading time axis.  Base points are the grid points of
    the region, strided so that at most ``max_side`` lie along each axis.
    """
    grid = env.grid
    u = np.asarray(u, dtype=float)
    grid.check(u)
    box = as_box(region, grid)
    sx, sy = box.slices(grid)
    rc = int(np.ceil(stencil_radius / grid.h - 1e-9))
    if sx.start - rc < 0 or sy.start - rc < 0 or sx.stop - 1 + rc > grid.n - 1 or sy.stop - 1 + rc > grid.n - 1:
        raise DomainError("stencil exits the grid")
    step_x = max(1, -(-(sx.stop - sx.start) // max_side))
    step_y = max(1, -(-(sy.stop - sy.start) // max_side))
    bx, by = np.meshgrid(np.arange(sx.start, sx.stop, step_x), np.arange(sy.start, sy.stop, step_y),
                         indexing="ij")
    base = np.stack([bx.ravel(), by.ravel()], axis=1)
    half = _offsets(rc + 1e-9, max_side)
    near = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    offs = [(0, 0)] + near + [tuple(o) for o in half] + [(-a, -b) for a, b in half]
    offs = np.array(list(dict.fromkeys(offs)), dtype=int)
    I = env.I_xi
    px, py = base[:, 0][:, None], base[:, 1][:, None]
    qx, qy = px + offs[:, 0][None, :], py + offs[:, 1][None, :]
    ux = u[..., px, py]
    vals = u[..., qx, qy] - ux - ux * (I[qx, qy] - I[px, py])
    U = TwoVariableField(grid, base, offs, vals)
    U.nu = U.gradient()
    return U


def _bump(r):
    out = np.zeros_like(r)
    inside = r < 1
    out[inside] = np.exp(-1.0 / (1 - r[inside] ** 2))
    return out


def heat_battery(grid, L_values=(0.5, 1.0, 2.0), n_draws=8, seed=0, T_factor=1.0, n_times=24):
    """Heat solutions from zero data driven by sources outside ``B(0, L)``.

    Each draw is a compact bump of radius ``0.4 L`` centred at distance
    ``d in [1.5 L, 2 L]`` and switched on at a random time; the horizon is
    ``T_factor L^2``.  Solutions are computed with the exact Duhamel
    multiplier, so they solve the homogeneous heat equation inside the ball.
    The same random draws are reused for every L, in units of L.
    """
    rng = np.random.default_rng(seed)
    draws = [(rng.uniform(0, 2 * np.pi), rng.uniform(1.5, 2.0), rng.uniform(0, 0.5),
              10 ** rng.uniform(-1, 1)) for _ in range(n_draws)]
    x, y = grid.mesh()
    lap = laplacian_symbol(grid)
    out = []
    for L in L_values:
        T = T_factor * L * L
        if 2.4 * L > grid.half_width:
            raise DomainError(f"L={L} too large for the torus")
        times = np.linspace(0, T, n_times + 1)
        for k, (ang, d, t0, amp) in enumerate(draws):
            cx, cy = d * L * np.cos(ang), d * L * np.sin(ang)
            g = amp * _bump(np.hypot(x - cx, y - cy) / (0.4 * L)) / L**2
            gh = fft2(g)
            sl = []
            for t in times:
                s = max(t - t0 * T, 0.0)
                with np.errstate(invalid="ignore", divide="ignore"):
                    mult = np.where(lap < 0, -np.expm1(lap * s) / np.where(lap < 0, -lap, 1), s)
                sl.append(ifft2(gh * mult).real)
            out.append({"L": L, "draw": k, "times": times, "values": np.array(sl)})
    return out


def heat_gradient_check(battery, grid):
    """``K = L sup_{B(L/2)} |grad u| / inf_c sup_{B(L)} |u - c|`` per battery member.

    The infimum over constants of the space-time sup is half the oscillation.
    """
    x, y = grid.mesh()
    rho = np.hypot(x, y)
    rows = []
    for item in battery:
        L, vals = item["L"], item["values"]
        inner, outer = rho <= L / 2, rho <= L
        grad = max(float(np.hypot(*spectral_gradient(v, grid))[inner].max()) for v in vals)
        seg = vals[:, outer]
        osc = 0.5 * float(seg.max() - seg.min())
        rows.append({"L": L, "draw": item["draw"], "gradient": grad, "oscillation": osc,
                     "K": L * grad / osc if osc > 0 else 0.0})
    Ls = sorted({r["L"] for r in rows})
    K_by_L = {L: max(r["K"] for r in rows if r["L"] == L) for L in Ls}
    vals = list(K_by_L.values())
    spread = max(vals) / min(vals) if min(vals) > 0 else np.inf
    return {"rows": rows, "K_by_L": K_by_L, "K": max(vals), "scale_spread": spread,
            "stable": bool(spread <= 2.0), "tracks_inverse_L": bool(spread <= 1.25)}
