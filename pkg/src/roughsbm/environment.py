"""White-noise environments, their enhancement and renormalization constants."""
from dataclasses import dataclass, field

import numpy as np

from .grid import DomainError, fft2, ifft2, wavenumbers, centered_to_origin
from .littlewood_paley import lp_for, paraproduct


class InsufficientSamplesError(ValueError):
    pass


def sample_white_noise(grid, seed):
    """I.i.d. centred Gaussians with cell variance ``1/h^2``."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(grid.shape) / grid.h


def chi_multiplier(grid):
    """0 on the sup-norm box of radius 1/8, 1 outside radius 1/4, C^2 in between."""
    kx, ky = wavenumbers(grid)
    t = np.clip((np.maximum(np.abs(kx), np.abs(ky)) - 1 / 8) * 8, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t**2)


def _require_periodic(grid):
    if grid.boundary != "periodic":
        raise DomainError("only the periodic torus is supported here")


def compute_I_xi(xi, grid):
    """Solve ``-Lap(I xi) = chi(D) xi`` by Fourier multiplication."""
    _require_periodic(grid)
    grid.check(xi)
    kx, ky = wavenumbers(grid)
    k2 = 4 * np.pi**2 * (kx**2 + ky**2)
    k2[0, 0] = 1.0
    m = chi_multiplier(grid) / k2
    m[0, 0] = 0.0
    return ifft2(fft2(xi) * m).real


def low_frequency_part(xi, grid):
    """``(1 - chi(D)) xi``."""
    return ifft2(fft2(xi) * (1 - chi_multiplier(grid))).real


def resonant_mean(xi_alpha, grid):
    """Spatial mean of ``I xi_alpha o xi_alpha`` for one sample."""
    i_xi = compute_I_xi(xi_alpha, grid)
    return float(paraproduct(i_xi, xi_alpha, "resonant", grid=grid).mean())


def seed_streams(master_seed, n):
    """Independent child seeds split from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master_seed).spawn(n)]


def renormalization_constant(alpha, grid, n_samples, kit, seed=0):
    """Ensemble and space average of ``I xi_alpha o xi_alpha``.

    Returns ``(C_alpha, standard_error)``.
    """
    if n_samples < 2:
        raise InsufficientSamplesError("need at least two samples for a standard error")
    if alpha < 4 * grid.h:
        raise DomainError(f"alpha={alpha} is below 4h={4 * grid.h}")
    vals = np.array([resonant_mean(kit.mollify(sample_white_noise(grid, s), alpha), grid)
                     for s in seed_streams(seed, n_samples)])
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples))


class Enhancements:
    """Lazy scale averages of the two-point objects.

    For a base point x and scale delta the averages are

        xiX:   int xi(y) (y - x) psi_delta(x - y) dy
        IxiXi: int ((I xi(y) - I xi(x)) xi(y) - C) psi_delta(x - y) dy

    both evaluated for all x at once by convolution.
    """

    def __init__(self, xi_alpha, I_xi_alpha, C_alpha, kit):
        kit.grid.check(xi_alpha)
        kit.grid.check(I_xi_alpha)
        _require_periodic(kit.grid)
        self.xi = xi_alpha
        self.I_xi = I_xi_alpha
        self.C = float(C_alpha)
        self.kit = kit

    def pair_xiX(self, x, xbar):
        """Two-point value at grid indices; vanishes on the diagonal."""
        h = self.kit.grid.h
        d = (np.asarray(xbar) - np.asarray(x)) * h
        return self.xi[tuple(xbar)] * d

    def pair_IxiXi(self, x, xbar):
        return (self.I_xi[tuple(xbar)] - self.I_xi[tuple(x)]) * self.xi[tuple(xbar)] - self.C

    def xiX_average(self, delta):
        grid = self.kit.grid
        psi = self.kit.psi(delta)
        x, y = grid.mesh()
        fx = fft2(self.xi)
        out = []
        for c in (x, y):
            k_hat = fft2(centered_to_origin(c * psi))
            out.append(-ifft2(fx * k_hat).real * grid.h**2)
        return np.stack(out)

    def IxiXi_average(self, delta):
        m = self.kit.mollify
        return m(self.I_xi * self.xi, delta) - self.I_xi * m(self.xi, delta) - self.C


def build_enhancements(xi_alpha, I_xi_alpha, C_alpha, kit):
    return Enhancements(xi_alpha, I_xi_alpha, C_alpha, kit)


def scale_sup(fields_by_delta, exponent, mask, weight=None):
    """``max_delta delta^exponent sup_mask |f_delta| / theta``.

    ``fields_by_delta`` maps delta to a field, or to a stack of components
    whose Euclidean norm is taken.
    """
    best = (0.0, None, None)
    for d, f in fields_by_delta.items():
        a = np.asarray(f)
        if a.ndim == 3:
            a = np.sqrt((a**2).sum(axis=0))
        else:
            a = np.abs(a)
        if weight is not None:
            a = a / weight
        a = np.where(mask, a, -np.inf)
        idx = np.unravel_index(np.argmax(a), a.shape)
        v = d**exponent * a[idx]
        if v > best[0] or best[1] is None:
            best = (float(v), d, idx)
    return best


@dataclass
class Environment:
    grid: object
    seed: int
    alpha: float
    xi: np.ndarray
    xi_alpha: np.ndarray
    I_xi: np.ndarray
    C_alpha: float
    C_alpha_se: float
    J_xi_chi: float
    kit: object = field(repr=False, default=None)
    norm_certificates: dict = field(default_factory=dict)

    def potential(self, renormalize=True):
        return self.xi_alpha - (self.C_alpha if renormalize else 0.0)

    def enhancements(self):
        return Enhancements(self.xi_alpha, self.I_xi, self.C_alpha, self.kit)

    def noise_norms(self, n, eps=0.1, weight=None):
        """The three enhanced-noise norms on the box P_n; cached."""
        key = (float(n), float(eps), None if weight is None else str(weight))
        if key in self.norm_certificates:
            return self.norm_certificates[key]
        grid = self.grid
        if n + 1 > grid.half_width:
            raise DomainError(f"P_{n} fattened by 1 exceeds the torus")
        mask = grid.box_mask(n)
        theta = None if weight is None else weight(grid)
        enh = self.enhancements()
        ds = self.kit.delta_grid
        out = {
            "xi": scale_sup({d: self.kit.mollify(self.xi_alpha, d) for d in ds}, 1 + eps, mask, theta)[0],
            "IxiXi": scale_sup({d: enh.IxiXi_average(d) for d in ds}, 2 * eps, mask, theta)[0],
            "xiX": scale_sup({d: enh.xiX_average(d) for d in ds}, eps, mask, theta)[0],
        }
        self.norm_certificates[key] = out
        return out

    def save(self, path):
        np.savez(path, side_length=self.grid.side_length, points=self.grid.n,
                 seed=self.seed, alpha=self.alpha, xi=self.xi, C_alpha=self.C_alpha,
                 C_alpha_se=self.C_alpha_se, delta_grid=np.array(self.kit.delta_grid))


def build_environment(grid, seed, alpha, kit, C_alpha=None, n_samples=16, xi=None):
    """Noise, its mollification at scale alpha, I xi_alpha and C_alpha.

    When ``C_alpha`` is None it is estimated from ``n_samples`` independent
    environments split from ``seed``.
    """
    _require_periodic(grid)
    if alpha < 4 * grid.h:
        raise DomainError(f"alpha={alpha} is below 4h={4 * grid.h}")
    if xi is None:
        xi = sample_white_noise(grid, seed)
    se = 0.0
    if C_alpha is None:
        C_alpha, se = renormalization_constant(alpha, grid, n_samples, kit, seed=seed + 1)
    xa = kit.mollify(xi, alpha)
    return Environment(grid, seed, alpha, xi, xa, compute_I_xi(xa, grid), float(C_alpha),
                       float(se), float(np.abs(low_frequency_part(xa, grid)).max()), kit)


def load_environment(path, kit):
    with np.load(path) as z:
        from .grid import GridSpec
        grid = GridSpec(float(z["side_length"]), int(z["points"]))
        if kit.grid != grid:
            raise DomainError("kit grid does not match the archive")
        xi = z["xi"]
        env = build_environment(grid, int(z["seed"]), float(z["alpha"]), kit,
                                C_alpha=float(z["C_alpha"]), xi=xi)
        env.C_alpha_se = float(z["C_alpha_se"])
    return env


def zero_environment(grid, kit, alpha=None):
    """Environment with xi = 0, for the deterministic tests and the barrier runs."""
    z = np.zeros(grid.shape)
    alpha = alpha if alpha is not None else kit.delta_grid[-1]
    return Environment(grid, 0, alpha, z, z, z, 0.0, 0.0, 0.0, kit)


def convergence_check(grid, seed, alphas, kit, eps_prime=0.05, weight=None, n_samples=16,
                     C_values=None):
    """Cauchy diagnostics for the mollified noise and the renormalized resonant product.

    Returns per consecutive pair the weighted negative-Holder norms of the
    differences, with and without the renormalization constants, and the
    cumulative differences measured from the first (coarsest) alpha.
    """
    from .norms import neg_holder_seminorm
    xi = sample_white_noise(grid, seed)
    theta = None if weight is None else weight
    C = {}
    xs, res = {}, {}
    for i, a in enumerate(alphas):
        if C_values is not None:
            C[a] = C_values[i]
        else:
            C[a] = renormalization_constant(a, grid, n_samples, kit, seed=seed + 1)[0]
        xs[a] = kit.mollify(xi, a)
        res[a] = paraproduct(compute_I_xi(xs[a], grid), xs[a], "resonant", grid=grid)
    region = grid.half_width - 1 - grid.h

    def norm(f, alpha):
        return neg_holder_seminorm(f, alpha, region, kit, weight=theta).value

    rows = []
    a0 = alphas[0]
    for a, b in zip(alphas[:-1], alphas[1:]):
        rows.append({
            "alpha": a, "alpha_next": b,
            "xi_diff": norm(xs[a] - xs[b], -1 - eps_prime),
            "resonant_diff": norm((res[a] - C[a]) - (res[b] - C[b]), -2 * eps_prime),
            "resonant_diff_unrenormalized": norm(res[a] - res[b], -2 * eps_prime),
            "resonant_cumulative": norm((res[b] - C[b]) - (res[a0] - C[a0]), -2 * eps_prime),
            "resonant_cumulative_unrenormalized": norm(res[b] - res[a0], -2 * eps_prime),
        })
    xi_d = [r["xi_diff"] for r in rows]
    rs_d = [r["resonant_diff"] for r in rows]
    cum0 = [r["resonant_cumulative_unrenormalized"] for r in rows]
    return {
        "rows": rows,
        "C": C,
        "cauchy": bool(all(b <= a for a, b in zip(xi_d, xi_d[1:]))
                       and all(b <= a for a, b in zip(rs_d, rs_d[1:]))),
        "ablation_growing": bool(all(b > a for a, b in zip(cum0, cum0[1:]))),
    }

