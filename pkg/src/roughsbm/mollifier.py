"""Self-similar mollifiers with strictly positive Fourier transform.

The base bump is the radial exponential bump supported in the ball of radius
1/2. Squaring its self-convolution gives a kernel ``phi`` whose transform is an
autoconvolution of a non-negative function, hence positive. Rescaled copies
``phi_s(x) = s^-2 phi(x/s)`` are chained into

    psi_delta = phi_{delta/2} * phi_{delta/4} * ...

Every factor is built on the grid itself (bump sampled at scale ``s``,
discrete convolution, discrete normalization). A factor with ``s <= 2h`` has a
single nonzero sample and is the identity, so the chain terminates exactly and
``psi_delta = phi_{delta/2} * psi_{delta/2}`` holds to round-off.
"""
from dataclasses import dataclass, field

import numpy as np

from .grid import (GridSpec, ShapeError, apply_multiplier, centered_to_origin,
                   fft2, ifft2, origin_to_centered)

# transforms below this are at the floating-point floor and count as unresolved
RESOLUTION_FLOOR = 1e-13


class ResolutionError(ValueError):
    """The grid is too coarse for the requested construction."""


class ConstructionError(RuntimeError):
    """A constructed kernel violates Fourier positivity."""


def _bump_profile(r):
    z = (2.0 * r) ** 2
    out = np.zeros_like(r)
    inside = z < 1
    out[inside] = np.exp(-1.0 / (1.0 - z[inside]))
    return out


def build_base_bump(grid, scale=1.0, check=True):
    """Radial bump ``exp(-1/(1-4|x|^2/s^2))`` supported in B(0, s/2)."""
    if check and scale / grid.h < 8:
        raise ResolutionError(
            f"bump of diameter {scale} spans {scale / grid.h:.1f} cells; need at least 8")
    x, y = grid.mesh()
    return _bump_profile(np.hypot(x, y) / scale)


def kernel_transform(kernel, grid):
    """``h^2`` times the DFT of a centred kernel (a Riemann sum of F kernel)."""
    return fft2(centered_to_origin(kernel)).real * grid.h**2


def resolved_minimum(transform):
    """Smallest transform value among frequencies above the round-off floor.

    Returns ``(minimum, n_resolved)``; negative entries are always counted as
    resolved so that a sign defect is never hidden by the floor.
    """
    t = np.asarray(transform)
    mask = (np.abs(t) >= RESOLUTION_FLOOR) | (t < -RESOLUTION_FLOOR)
    return float(t[mask].min()), int(mask.sum())


def build_phi(bump, grid, check=True):
    """``(bump * bump)^2`` normalized to unit discrete integral."""
    grid.check(bump)
    b_hat = fft2(centered_to_origin(bump))
    conv = ifft2(b_hat * b_hat).real * grid.h**2
    phi = conv**2
    phi /= phi.sum() * grid.h**2
    phi = origin_to_centered(phi)
    if check:
        m, _ = resolved_minimum(kernel_transform(phi, grid))
        if not m > 0:
            raise ConstructionError(
                f"non-positive Fourier coefficient {m:.3e}; refine the grid")
    return phi


def phi_at_scale(grid, scale, min_cells=16):
    """``phi_s`` sampled at the grid points.

    Small scales are built on a locally refined periodic patch and subsampled;
    subsampling only adds aliased copies of a positive transform, so Fourier
    positivity survives. For ``s <= h`` only the origin sample is nonzero and
    the result is the discrete delta.
    """
    h = grid.h
    out = np.zeros(grid.shape)
    if scale <= h * (1 + 1e-12):
        out[grid.origin_index()] = 1.0 / h**2
        return out
    q = 1
    while scale / (h / q) < min_cells:
        q *= 2
    half = 1
    while half * h < 2 * scale:
        half *= 2
    m = min(2 * half, grid.n)
    patch = GridSpec(m * h, m * q)
    fine = build_phi(build_base_bump(patch, scale, check=False), patch, check=False)
    c = patch.n // 2
    coarse = fine[c % q::q, c % q::q]
    coarse = coarse / (coarse.sum() * h**2)
    lo = grid.n // 2 - m // 2
    out[lo:lo + m, lo:lo + m] = coarse
    return out


def max_levels(grid, delta):
    """Largest n with ``delta 2^-n >= 2h``."""
    return int(np.floor(np.log2(delta / (2 * grid.h)) + 1e-12))


def default_delta_grid(grid, j_max=None):
    """Scales ``2^-j`` for ``j = 0..J`` with ``2^-J >= 4h``."""
    top = int(np.floor(np.log2(1 / (4 * grid.h)) + 1e-12))
    if top < 0:
        raise ResolutionError("grid spacing exceeds 1/4; no admissible scale")
    if j_max is None:
        j_max = top
    if j_max > top:
        raise ResolutionError(f"j_max={j_max} needs 2^-j_max >= 4h; largest admissible is {top}")
    return tuple(2.0**-j for j in range(j_max + 1))


def _embedding_grid(grid):
    if grid.boundary == "dirichlet":
        return GridSpec(2 * grid.side_length, 2 * grid.n, "periodic")
    return grid


@dataclass
class MollifierKit:
    grid: GridSpec
    delta_grid: tuple
    tol: float = 1e-8
    _factors: dict = field(default_factory=dict, repr=False)
    _psi_hat: dict = field(default_factory=dict, repr=False)

    @property
    def work_grid(self):
        return _embedding_grid(self.grid)

    @property
    def base_bump(self):
        return build_base_bump(self.work_grid)

    @property
    def phi(self):
        return build_phi(self.base_bump, self.work_grid)

    def factor_hat(self, scale):
        key = float(scale)
        if key not in self._factors:
            self._factors[key] = kernel_transform(phi_at_scale(self.work_grid, key), self.work_grid)
        return self._factors[key]

    def levels(self, delta, n_levels=None):
        """Transforms of ``psi_{delta,n}`` for n = 1..n_levels."""
        top = max_levels(self.work_grid, delta)
        if n_levels is None:
            n_levels = top
        if n_levels > top:
            raise ResolutionError(
                f"delta={delta} with {n_levels} levels reaches scale below 2h; "
                f"maximal usable n_levels is {top}")
        out, acc = [], np.ones(self.work_grid.shape)
        for j in range(1, n_levels + 1):
            acc = acc * self.factor_hat(delta * 2.0**-j)
            out.append(acc)
        return out

    def psi_hat(self, delta):
        """Multiplier of the converged ``psi_delta``."""
        key = float(delta)
        if key not in self._psi_hat:
            if key > 1 or key <= 0:
                raise ValueError("delta must lie in (0, 1]")
            lv = self.levels(key)
            self._psi_hat[key] = lv[-1] if lv else np.ones(self.work_grid.shape)
        return self._psi_hat[key]

    def psi(self, delta):
        """Real-space ``psi_delta``, centred at the origin index."""
        g = self.work_grid
        return origin_to_centered(ifft2(self.psi_hat(delta)).real) / g.h**2

    def psi_level(self, delta, n):
        g = self.work_grid
        lv = self.levels(delta, n)
        return origin_to_centered(ifft2(lv[-1]).real) / g.h**2

    def level_increments(self, delta):
        """Sup-norm increments between successive levels."""
        g = self.work_grid
        lv = self.levels(delta)
        prev = np.ones(g.shape)
        out = []
        for t in lv:
            out.append(float(np.abs(ifft2(t - prev).real).max() / g.h**2))
            prev = t
        return out

    def multiplier(self, delta):
        if delta not in self.delta_grid and not any(np.isclose(delta, d) for d in self.delta_grid):
            raise ValueError(f"delta={delta} is not in the kit's delta grid {self.delta_grid}")
        return self.psi_hat(delta)

    def mollify(self, f, delta):
        """``f * psi_delta``; batched over leading axes."""
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.grid.shape:
            raise ShapeError(f"field of shape {f.shape} does not match grid {self.grid.shape}")
        m = self.multiplier(delta)
        if self.grid.boundary == "periodic":
            return apply_multiplier(f, m)
        n = self.grid.n
        pad = np.zeros(f.shape[:-2] + (2 * n, 2 * n))
        lo = n // 2
        pad[..., lo:lo + n, lo:lo + n] = f
        return apply_multiplier(pad, m)[..., lo:lo + n, lo:lo + n]

    def certificates(self):
        """Mass, positivity and self-similarity diagnostics per scale."""
        g = self.work_grid
        rows = []
        phi = self.phi
        for d in self.delta_grid:
            t = self.psi_hat(d)
            kern = self.psi(d)
            direct = kernel_transform(kern, g)
            mn, nres = resolved_minimum(direct)
            rhs = self.factor_hat(d / 2) * self.psi_hat(d / 2)
            self_sim = float(np.abs(ifft2(t - rhs).real).max() / g.h**2)
            rows.append({
                "delta": d,
                "mass": float(kern.sum() * g.h**2),
                "fourier_min": mn,
                "n_resolved": nres,
                "n_levels": max_levels(g, d),
                "self_similarity": self_sim,
            })
        return {
            "phi_mass": float(phi.sum() * g.h**2),
            "phi_fourier_min": resolved_minimum(kernel_transform(phi, g))[0],
            "scales": rows,
        }

    def save(self, path):
        arrays = {f"psi_{d:.10g}": self.psi(d) for d in self.delta_grid}
        np.savez(path, side_length=self.grid.side_length, points=self.grid.n,
                 boundary=self.grid.boundary, delta_grid=np.array(self.delta_grid),
                 tol=self.tol, phi=self.phi, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            grid = GridSpec(float(z["side_length"]), int(z["points"]), str(z["boundary"]))
            kit = cls(grid, tuple(float(d) for d in z["delta_grid"]), float(z["tol"]))
            for d in kit.delta_grid:
                kit._psi_hat[float(d)] = kernel_transform(z[f"psi_{d:.10g}"], kit.work_grid)
        return kit


def build_kit(grid, j_max=None, tol=1e-8):
    """Kit on ``grid`` with scales ``2^-j``, j = 0..j_max."""
    build_base_bump(grid)
    return MollifierKit(grid, default_delta_grid(grid, j_max), tol)


def build_psi(grid, delta, n_levels=8):
    """Real-space ``psi_{delta, n_levels}`` on ``grid``."""
    kit = MollifierKit(grid, (delta,))
    return kit.psi_level(delta, n_levels)


def mollify(f, delta, kit):
    return kit.mollify(f, delta)
