"""Branching random walk in a static random environment.

Particles live on the lattice ``(1/n) Z^2`` wrapped on the environment torus
and carry mass ``1/K``.  Each particle jumps to each of its four neighbours at
rate ``n^2`` (generator: the five-point Laplacian at spacing ``1/n``), splits
in two at rate ``kappa K / 2 + V_+`` and dies at rate ``kappa K / 2 + V_-``.
With ``kappa = 0`` and ``K = 1`` this is plain sign-split branching.

For ``w(t, x) = E_x[exp(-<mu(t), phi0>)]`` started from one particle the
backward equation, written for ``q = 1 - w``, reads

    dq/dt = Lap_n q + V q - b q^2,    q(0) = 1 - exp(-phi0 / K),

and a configuration of particles at ``x_i`` has Laplace functional
``prod_i w(x_i)``.  Since particles do not interact, the simulation runs
each particle on its own exponential clock of rate ``4 n^2 + max(b + d)``
(uniformization with null events); all particles of all trials advance in
one vectorized sweep per event.
"""
from dataclasses import dataclass, field

import numpy as np

from .grid import DomainError, fft2, ifft2
from .pam import SemilinearProblem, StabilityError, reaction_flow, solve_imex


@dataclass
class Lattice:
    """Sites ``(i - M/2) / n`` for ``i in [0, M)``, subsampling the environment grid by ``stride``."""
    grid: object
    n: int
    stride: int

    @property
    def sites(self):
        return self.grid.n // self.stride

    @property
    def spacing(self):
        return 1.0 / self.n

    @property
    def coords(self):
        return (np.arange(self.sites) - self.sites // 2) * self.spacing

    def restrict(self, f):
        """Sample a field on the environment grid at the lattice sites."""
        self.grid.check(f)
        return np.asarray(f, dtype=float)[..., ::self.stride, ::self.stride]

    def radius(self, idx):
        """Max-norm distance of integer site indices from the origin."""
        return np.abs(np.asarray(idx) - self.sites // 2).max(axis=-1) * self.spacing

    def index_of(self, x):
        return tuple(int(round(v * self.n)) + self.sites // 2 for v in x)


def make_lattice(grid, n):
    if grid.boundary != "periodic":
        raise DomainError("the walk needs a periodic environment grid")
    stride = 1.0 / (n * grid.h)
    s = int(round(stride))
    if s < 1 or abs(stride - s) > 1e-9 or grid.n % s:
        raise DomainError(f"lattice scale n={n} is not an integer coarsening of h={grid.h}")
    return Lattice(grid, int(n), s)


@dataclass
class BranchingRates:
    lattice: Lattice
    potential: np.ndarray
    kappa: float = 0.0
    K: float = 1.0

    @property
    def birth(self):
        return 0.5 * self.kappa * self.K + np.maximum(self.potential, 0.0)

    @property
    def death(self):
        return 0.5 * self.kappa * self.K + np.maximum(-self.potential, 0.0)

    @property
    def jump_rate(self):
        return 4.0 * self.lattice.n ** 2

    @property
    def total_rate(self):
        return self.jump_rate + float((self.birth + self.death).max())


def branching_rates(env, n, kappa=0.0, K=1.0, renormalize=True):
    """Rates from the renormalized potential ``xi_alpha - C_alpha`` sampled on the lattice."""
    lat = make_lattice(env.grid, n)
    return BranchingRates(lat, lat.restrict(env.potential(renormalize)), kappa, K)


def constant_rates(grid, n, value, kappa=0.0, K=1.0):
    lat = make_lattice(grid, n)
    return BranchingRates(lat, np.full((lat.sites, lat.sites), float(value)), kappa, K)


@dataclass
class ParticleMeasure:
    """Particles at integer lattice sites, each of mass ``1/K``."""
    lattice: Lattice
    sites: np.ndarray
    K: float = 1.0
    t: float = 0.0

    @property
    def count(self):
        return len(self.sites)

    @property
    def mass(self):
        return self.count / self.K

    @property
    def support_radius(self):
        return float(self.lattice.radius(self.sites).max()) if self.count else 0.0

    def pairing(self, f):
        """``<mu, f>`` for f given on the lattice sites."""
        f = np.asarray(f)
        return float(f[self.sites[:, 0], self.sites[:, 1]].sum()) / self.K


def point_mass(lattice, x=(0.0, 0.0), K=1):
    """Unit mass at x: K particles at the nearest site."""
    i = lattice.index_of(x)
    return ParticleMeasure(lattice, np.tile(np.array(i, dtype=np.int64), (int(K), 1)), K)


@dataclass
class SimulationResult:
    lattice: Lattice
    T: float
    K: float
    checkpoints: np.ndarray
    population: np.ndarray
    radius: np.ndarray
    final_count: np.ndarray
    laplace_exponent: np.ndarray
    truncated: np.ndarray
    seed: int = 0
    events: int = 0
    final_sites: list = field(default_factory=list, repr=False)

    @property
    def trials(self):
        return len(self.final_count)

    @property
    def support_radius(self):
        """``sup_{s <= T}`` of the support radius, per trial."""
        return self.radius[:, -1]

    @property
    def final_mass(self):
        return self.final_count / self.K

    @property
    def laplace_weight(self):
        return np.exp(-self.laplace_exponent)

    def laplace_estimate(self):
        """Mean of ``exp(-<mu(T), phi0>)`` over untruncated trials, with its standard error."""
        w = self.laplace_weight[~self.truncated]
        return float(w.mean()), float(w.std(ddof=1) / np.sqrt(len(w)))

    def confinement_estimate(self, box):
        """Fraction of untruncated trials whose support never left ``P_box``."""
        inside = (self.support_radius <= box + 1e-12)[~self.truncated]
        p = float(inside.mean())
        return p, float(np.sqrt(max(p * (1 - p), 0.0) / len(inside)))

    def rows(self):
        return [{"trial": i, "final_mass": float(self.final_mass[i]),
                 "support_radius": float(self.support_radius[i]),
                 "laplace_weight": float(self.laplace_weight[i]),
                 "truncated": bool(self.truncated[i])} for i in range(self.trials)]


_STEPS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)


def simulate(rates, initial, T, seed=0, trials=1, phi0=None, checkpoints=None, cap=10**7,
             keep_final=False):
    """Independent copies of the branching walk from ``initial`` up to time T.

    Returns per-trial final counts, ``<mu(T), phi0>``, and the population and
    running support radius at the checkpoint times.  A trial whose
    population exceeds ``cap / trials`` is stopped and flagged truncated; the
    whole batch never holds more than ``cap`` particles.
    """
    lat = rates.lattice
    if initial.lattice.n != lat.n or initial.lattice.sites != lat.sites:
        raise DomainError("initial measure lives on a different lattice")
    if T < 0:
        raise ValueError("T must be non-negative")
    rng = np.random.default_rng(seed)
    M = lat.sites
    n2 = float(lat.n) ** 2
    birth, death = rates.birth.ravel(), rates.death.ravel()
    R = rates.total_rate
    cps = np.linspace(0, T, 11) if checkpoints is None else np.asarray(checkpoints, dtype=float)
    if cps[0] != 0 or cps[-1] != T:
        raise ValueError("checkpoints must run from 0 to T")
    nk = len(cps)
    phi = None if phi0 is None else np.asarray(phi0, dtype=float).ravel()
    per_trial_cap = max(1, cap // max(trials, 1))

    p0 = initial.count
    pos = np.tile(initial.sites, (trials, 1)).astype(np.int64)
    trial = np.repeat(np.arange(trials), p0)
    clock = np.full(len(pos), float(initial.t if initial.t else 0.0))
    pop_delta = np.zeros((trials, nk + 1))
    pop_delta[:, 0] = p0
    r0 = initial.support_radius
    rad = np.full((trials, nk + 1), -np.inf)
    rad[:, 0] = r0
    final_count = np.zeros(trials, dtype=np.int64)
    expo = np.zeros(trials)
    truncated = np.zeros(trials, dtype=bool)
    finals = [[] for _ in range(trials)] if keep_final else []
    events = 0
    it = 0
    while len(pos):
        it += 1
        clock += rng.exponential(1.0 / R, len(pos))
        done = clock > T
        if done.any():
            dt_, dp = trial[done], pos[done]
            np.add.at(final_count, dt_, 1)
            if phi is not None:
                np.add.at(expo, dt_, phi[dp[:, 0] * M + dp[:, 1]] / rates.K)
            if keep_final:
                for k, p in zip(dt_, dp):
                    finals[k].append(p)
            live = ~done
            pos, trial, clock = pos[live], trial[live], clock[live]
            if not len(pos):
                break
        events += len(pos)
        flat = pos[:, 0] * M + pos[:, 1]
        u = rng.random(len(pos)) * R
        jump = u < 4 * n2
        if jump.any():
            d = np.minimum((u[jump] / n2).astype(np.int64), 3)
            pos[jump] = (pos[jump] + _STEPS[d]) % M
            r = lat.radius(pos[jump])
            k = np.searchsorted(cps, clock[jump], side="left")
            np.maximum.at(rad, (trial[jump], k), r)
        rest = u - 4 * n2
        b = birth[flat]
        born = (~jump) & (rest < b)
        died = (~jump) & (~born) & (rest < b + death[flat])
        if died.any():
            k = np.searchsorted(cps, clock[died], side="left")
            np.add.at(pop_delta, (trial[died], k), -1)
        if born.any():
            k = np.searchsorted(cps, clock[born], side="left")
            np.add.at(pop_delta, (trial[born], k), 1)
            keep = ~died
            pos = np.concatenate([pos[keep], pos[born]])
            trial = np.concatenate([trial[keep], trial[born]])
            clock = np.concatenate([clock[keep], clock[born]])
        elif died.any():
            keep = ~died
            pos, trial, clock = pos[keep], trial[keep], clock[keep]
        if it % 16 == 0 and len(pos):
            counts = np.bincount(trial, minlength=trials)
            over = counts > per_trial_cap
            if over.any():
                truncated |= over
                keep = ~over[trial]
                pos, trial, clock = pos[keep], trial[keep], clock[keep]
    population = np.cumsum(pop_delta, axis=1)[:, :nk]
    radius = np.maximum.accumulate(rad, axis=1)[:, :nk]
    res = SimulationResult(lat, T, rates.K, cps, population, radius, final_count, expo, truncated,
                           seed, events)
    if keep_final:
        res.final_sites = [np.array(f, dtype=np.int64).reshape(-1, 2) for f in finals]
    return res


def _lattice_heat_symbol(lat, t):
    k = np.fft.fftfreq(lat.sites)
    lam = 2.0 * (np.cos(2 * np.pi * k) - 1.0) * lat.n ** 2
    return np.exp(t * (lam[:, None] + lam[None, :]))


def solve_discrete_dual(rates, phi0, T, dt=None, forcing=None, return_q=False):
    """``w(T) = E_x[exp(-<mu(T), phi0> - int_0^T <mu(s), forcing> ds)]`` at every site.

    ``phi0`` and ``forcing`` are given on the lattice sites.  The q-form is
    integrated by Strang splitting with the exact reaction flow and the exact
    lattice heat flow; the step error is O(dt^2).
    """
    lat = rates.lattice
    K = rates.K
    V = rates.potential
    b = rates.birth
    phi0 = np.asarray(phi0, dtype=float)
    f = np.zeros_like(V) if forcing is None else np.asarray(forcing, dtype=float) / K
    q = -np.expm1(-phi0 / K)
    # the reaction sub-flow is exact; dt only controls the splitting error,
    # whose size is set by the linearized reaction rate |V| + 2 b q + f
    stiff = float((np.abs(V) + 2 * b * float(q.max()) + f).max())
    if dt is None:
        dt = min(1e-3, 0.5 / max(stiff, 1e-300), T) if T > 0 else 1.0
    if T > 0 and dt * stiff > 1.0:
        raise StabilityError(f"dt={dt} too coarse for the reaction rates; use dt <= {1.0 / stiff:.3g}")
    if T > 0:
        steps = max(1, int(np.ceil(T / dt - 1e-9)))
        h = T / steps
        sym = _lattice_heat_symbol(lat, h)
        # killing term f (1 - q): reaction a q - b q^2 + f with a = V - f
        a = V - f
        for _ in range(steps):
            q = reaction_flow(q, a, b, f, h / 2)
            q = ifft2(fft2(q) * sym).real
            q = reaction_flow(q, a, b, f, h / 2)
    return q if return_q else 1.0 - q


def measure_laplace(w, measure):
    """``prod_i w(x_i)`` for the particles of a measure."""
    s = measure.sites
    return float(np.prod(np.asarray(w)[s[:, 0], s[:, 1]]))


def continuum_log_laplace(env, kappa, phi0, T, dt=1e-3, forcing=None, renormalize=True,
                          laplacian="spectral"):
    """``U_T phi0`` on the environment grid: the absorption PAM started from phi0."""
    grid = env.grid
    prob = SemilinearProblem(grid, kappa, np.asarray(phi0, dtype=float), forcing, T=T, env=env,
                             renormalize=renormalize)
    if T == 0:
        return np.array(phi0, dtype=float)
    return solve_imex(prob, dt, scheme="strang", n_saves=2, laplacian=laplacian).final


def _as_field(phi0, grid):
    if callable(phi0):
        x, y = grid.mesh()
        return np.asarray(phi0(x, y), dtype=float)
    grid.check(phi0)
    return np.asarray(phi0, dtype=float)


def point_laplace(rates, phi0, T, x, dt=None):
    """Lattice-dual value for unit mass at x: ``w(x)^K``, evaluated as ``exp(K log1p(-q))``."""
    lat = rates.lattice
    q = solve_discrete_dual(rates, phi0, T, dt=dt, return_q=True)
    return float(np.exp(rates.K * np.log1p(-q[lat.index_of(x)])))


def laplace_duality_experiment(env, n, phi0, T, trials, kappa=0.0, K=1, start=(0.0, 0.0), seed=0,
                               dual_dt=None, continuum_dt=1e-3, simulate_mc=True, continuum=None):
    """Monte-Carlo, exact lattice dual and continuum value of ``E exp(-<mu(T), phi0>)``.

    The initial measure is unit mass at ``start`` (K particles).  A
    precomputed continuum value may be passed to share it across lattices.
    """
    grid = env.grid
    field0 = _as_field(phi0, grid)
    if field0.min() < 0:
        raise ValueError("phi0 must be non-negative")
    rates = branching_rates(env, n, kappa, K)
    lat = rates.lattice
    lat_phi = lat.restrict(field0)
    dual = point_laplace(rates, lat_phi, T, start, dt=dual_dt)
    if continuum is None:
        v = continuum_log_laplace(env, kappa, field0, T, dt=continuum_dt)
        continuum = float(np.exp(-v[grid.index_of(start[0]), grid.index_of(start[1])]))
    report = {"n": n, "K": K, "kappa": kappa, "T": T, "trials": trials, "dual": dual,
              "continuum": continuum, "dual_continuum_gap": abs(dual - continuum)}
    if simulate_mc and trials > 0:
        sim = simulate(rates, point_mass(lat, start, K), T, seed=seed, trials=trials, phi0=lat_phi)
        mean, se = sim.laplace_estimate()
        report.update({"mc": mean, "mc_se": se, "mc_dual_gap": abs(mean - dual),
                       "mc_dual_z": abs(mean - dual) / se if se > 0 else (0.0 if mean == dual else np.inf),
                       "truncated": int(sim.truncated.sum())})
    return report


def log_laplace_consistency(env, n_values, phi0, T, kappa, mass_per_site=0.25, start=(0.0, 0.0),
                            continuum_dt=1e-3, dual_dt=None):
    """Gap between the lattice dual and the continuum as the lattice refines.

    The particle number per unit mass is coupled to the lattice as
    ``K = mass_per_site n^2`` so that both corrections vanish together.
    """
    field0 = _as_field(phi0, env.grid)
    v = continuum_log_laplace(env, kappa, field0, T, dt=continuum_dt)
    grid = env.grid
    cont = float(np.exp(-v[grid.index_of(start[0]), grid.index_of(start[1])]))
    rows = [laplace_duality_experiment(env, n, field0, T, 0, kappa, mass_per_site * n * n, start,
                                       dual_dt=dual_dt, simulate_mc=False, continuum=cont)
            for n in n_values]
    gaps = [r["dual_continuum_gap"] for r in rows]
    return {"rows": rows, "continuum": cont,
            "monotone": bool(all(b < a for a, b in zip(gaps, gaps[1:])))}


def compact_support_experiment(env, lattice_n, boxes, m_values, T, trials, kappa, K,
                               start=(0.0, 0.0), seed=0, dt=1e-3, laplacian="lattice"):
    """Two estimates of ``P[support stays in P_box up to T]``.

    (a) the Monte-Carlo fraction of trials whose running support radius stays
    within the box; (b) ``exp(-<mu(0), U_T^{phi_box^m} 0>)`` from the
    continuum solver for each m.  The exact lattice value with hard killing
    outside the box is reported alongside.
    """
    from .cutoffs import build_forcing
    grid = env.grid
    ix = grid.index_of(start[0]), grid.index_of(start[1])
    zero = np.zeros(grid.shape)
    rates = branching_rates(env, lattice_n, kappa, K)
    lat = rates.lattice
    init = point_mass(lat, start, K)
    pde = {}
    for box in boxes:
        for m in m_values:
            v = continuum_log_laplace(env, kappa, zero, T, dt=dt, forcing=build_forcing(grid, box, m),
                                      laplacian=laplacian)
            pde[(box, m)] = float(np.exp(-v[ix]))
    killed = {}
    lat_r = lat.radius(np.stack(np.meshgrid(np.arange(lat.sites), np.arange(lat.sites),
                                            indexing="ij"), axis=-1))
    for box in boxes:
        w = _killed_dual(rates, lat_r > box + 1e-12, T)
        killed[box] = measure_laplace(w, init)
    sim = simulate(rates, init, T, seed=seed, trials=trials)
    rows = []
    for box in boxes:
        p, se = sim.confinement_estimate(box)
        for m in m_values:
            rows.append({"box": box, "m": m, "pde": pde[(box, m)], "mc": p, "mc_se": se,
                         "lattice_killed": killed[box]})
    return {"rows": rows, "pde": pde, "mc": {b: sim.confinement_estimate(b) for b in boxes},
            "lattice_killed": killed, "truncated": int(sim.truncated.sum()), "trials": trials,
            "support_radius": sim.support_radius}


def _killed_dual(rates, absorbing, T, steps_per_unit=4000):
    """Lattice dual with hard killing: q is pinned to 1 on the ``absorbing`` sites."""
    lat = rates.lattice
    V, b = rates.potential, rates.birth
    q = np.zeros_like(V)
    q[absorbing] = 1.0
    steps = max(1, int(np.ceil(T * steps_per_unit)))
    h = T / steps
    sym = _lattice_heat_symbol(lat, h)
    for _ in range(steps):
        q = reaction_flow(q, V, b, 0.0, h / 2)
        q[absorbing] = 1.0
        q = ifft2(fft2(q) * sym).real
        q[absorbing] = 1.0
        q = reaction_flow(q, V, b, 0.0, h / 2)
        q[absorbing] = 1.0
    return 1.0 - q
