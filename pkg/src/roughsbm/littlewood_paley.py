"""Dyadic Littlewood-Paley blocks on the periodic grid and Bony's products."""
from functools import lru_cache

import numpy as np

from .grid import ShapeError, fft2, ifft2, wavenumbers

INNER, OUTER = 3 / 4, 4 / 3


def _smooth_step(t):
    """C-infinity step: 1 for t <= 0, 0 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t < 1, np.exp(-1 / np.maximum(1 - t, 1e-300)), 0.0)
    b = np.where(t > 0, np.exp(-1 / np.maximum(t, 1e-300)), 0.0)
    return a / (a + b)


def low_pass(r):
    """Radial cutoff equal to 1 on |k| <= 3/4 and 0 on |k| >= 4/3."""
    return _smooth_step((r - INNER) / (OUTER - INNER))


class LPDecomposition:
    """Partition of unity ``rho_{-1}, rho_0, ..., rho_{j_max}`` on the grid.

    The last block absorbs everything above its inner radius, so the profiles
    sum to one on every grid frequency.
    """

    def __init__(self, grid):
        if grid.boundary != "periodic":
            raise ValueError("Littlewood-Paley blocks need a periodic grid")
        self.grid = grid
        nyq = 1 / (2 * grid.h)
        self.j_max = int(np.floor(np.log2(nyq / INNER)))
        kx, ky = wavenumbers(grid)
        r = np.hypot(kx, ky)
        prof = [low_pass(r)]
        for j in range(0, self.j_max):
            prof.append(low_pass(r / 2 ** (j + 1)) - low_pass(r / 2**j))
        prof.append(1 - low_pass(r / 2**self.j_max))
        self.profiles = np.stack(prof)

    @property
    def rho_minus1(self):
        return self.profiles[0]

    @property
    def rho_0(self):
        return self.profiles[1]

    @property
    def indices(self):
        return list(range(-1, self.j_max + 1))

    def partition_error(self):
        return float(np.abs(self.profiles.sum(axis=0) - 1).max())

    def blocks(self, f):
        """Array of shape (j_max + 2, N, N); entry ``j + 1`` is ``Delta_j f``."""
        self.grid.check(f)
        return ifft2(fft2(f)[None] * self.profiles).real

    def block(self, f, j):
        return ifft2(fft2(f) * self.profiles[j + 1]).real


@lru_cache(maxsize=8)
def lp_for(grid):
    return LPDecomposition(grid)


def paraproduct(f, g, mode="less", lp=None, grid=None):
    """``f < g = sum_{i < j-1} D_i f D_j g`` or ``f o g = sum_{|i-j|<=1} D_i f D_j g``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ShapeError(f"shapes {f.shape} and {g.shape} differ")
    if lp is None:
        lp = lp_for(grid)
    bf, bg = lp.blocks(f), lp.blocks(g)
    nb = bf.shape[0]
    out = np.zeros(f.shape)
    if mode == "less":
        low = np.cumsum(bf, axis=0)
        for b in range(2, nb):
            out += low[b - 2] * bg[b]
    elif mode == "resonant":
        for b in range(nb):
            for c in range(max(0, b - 1), min(nb, b + 2)):
                out += bf[b] * bg[c]
    else:
        raise ValueError("mode must be 'less' or 'resonant'")
    return out
