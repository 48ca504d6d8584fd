"""Square grids, boxes and the Fourier helpers shared by every solver.

Grid points sit at ``x_i = (i - N/2) h`` so that the origin is the grid point
with index ``N/2`` and ``x -> -x`` maps index ``i`` to ``N - i`` exactly.
Frequencies are in cycles per unit length, matching the transform
``F f(k) = int exp(-2 pi i k.x) f(x) dx``.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft


class DomainError(ValueError):
    """Raised when a region, time or geometry does not fit the grid."""


class ShapeError(ValueError):
    """Raised when fields from different grids are combined."""


@dataclass(frozen=True)
class GridSpec:
    side_length: float
    points_per_side: int
    boundary: str = "periodic"

    def __post_init__(self):
        n = int(self.points_per_side)
        if n < 2 or n & (n - 1):
            raise ValueError("points_per_side must be a power of two")
        if not self.side_length > 0:
            raise ValueError("side_length must be positive")
        if self.boundary not in ("periodic", "dirichlet"):
            raise ValueError("boundary must be 'periodic' or 'dirichlet'")

    @property
    def n(self):
        return int(self.points_per_side)

    @property
    def h(self):
        return self.side_length / self.points_per_side

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def half_width(self):
        return self.side_length / 2

    @property
    def coords(self):
        return (np.arange(self.n) - self.n // 2) * self.h

    def mesh(self):
        c = self.coords
        return np.meshgrid(c, c, indexing="ij")

    def sup_radius(self):
        """|x| in the max norm at every grid point."""
        x, y = self.mesh()
        return np.maximum(np.abs(x), np.abs(y))

    def origin_index(self):
        return (self.n // 2, self.n // 2)

    def index_of(self, x):
        return int(round(x / self.h)) + self.n // 2

    def box_slice(self, half):
        """Index slice of the grid points with |x_i| <= half."""
        lo = int(np.ceil(-half / self.h - 1e-9)) + self.n // 2
        hi = int(np.floor(half / self.h + 1e-9)) + self.n // 2
        if lo < 0 or hi > self.n - 1:
            raise DomainError(f"box of half-width {half} exceeds the grid")
        return slice(lo, hi + 1)

    def box_mask(self, half):
        s = self.box_slice(half)
        mask = np.zeros(self.shape, dtype=bool)
        mask[s, s] = True
        return mask

    def with_points(self, points_per_side):
        return GridSpec(self.side_length, points_per_side, self.boundary)

    def periodic(self):
        return GridSpec(self.side_length, self.n, "periodic")

    def key(self):
        return f"L{self.side_length:g}_N{self.n}_{self.boundary}"

    def check(self, f):
        if np.shape(f)[-2:] != self.shape:
            raise ShapeError(f"field of shape {np.shape(f)} does not live on a {self.shape} grid")


@lru_cache(maxsize=32)
def _freqs(side_length, n):
    k = np.fft.fftfreq(n, d=side_length / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    kx.setflags(write=False)
    ky.setflags(write=False)
    return kx, ky


def wavenumbers(grid):
    """Frequency mesh (kx, ky) of the periodic grid, in cycles per length."""
    return _freqs(float(grid.side_length), grid.n)


def laplacian_symbol(grid):
    kx, ky = wavenumbers(grid)
    return -4 * np.pi**2 * (kx**2 + ky**2)


def fd_laplacian_symbol(grid, stride=1):
    """Symbol of the nearest-neighbour Laplacian with lattice step ``stride*h``."""
    n = grid.n // stride
    a = grid.h * stride
    kx, ky = wavenumbers(GridSpec(grid.side_length, n))
    return (2 * np.cos(2 * np.pi * kx * a) + 2 * np.cos(2 * np.pi * ky * a) - 4) / a**2


def fft2(f):
    return sfft.fft2(f, workers=-1)


def ifft2(f):
    return sfft.ifft2(f, workers=-1)


def apply_multiplier(f, symbol):
    """Real part of the inverse transform of ``symbol * F f``."""
    return ifft2(fft2(f) * symbol).real


def spectral_laplacian(f, grid):
    return apply_multiplier(f, laplacian_symbol(grid))


def spectral_gradient(f, grid):
    """Spectral gradient; the unpaired Nyquist mode is dropped."""
    kx, ky = wavenumbers(grid)
    nyq = 1 / (2 * grid.h)
    fh = fft2(f)
    out = []
    for k in (kx, ky):
        m = 2j * np.pi * np.where(np.isclose(np.abs(k), nyq), 0.0, k)
        out.append(ifft2(fh * m).real)
    return np.stack(out)


def central_gradient(f, grid):
    """Second-order central differences with periodic wrap."""
    gx = (np.roll(f, -1, axis=-2) - np.roll(f, 1, axis=-2)) / (2 * grid.h)
    gy = (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2 * grid.h)
    return np.stack([gx, gy])


def centered_to_origin(kernel):
    """Move a kernel stored with its centre at index N/2 to index 0."""
    return np.fft.ifftshift(kernel, axes=(-2, -1))


def origin_to_centered(kernel):
    return np.fft.fftshift(kernel, axes=(-2, -1))


@dataclass(frozen=True)
class Box:
    """Closed axis-parallel rectangle ``[x0, x1] x [y0, y1]``."""
    x0: float
    x1: float
    y0: float
    y1: float

    @classmethod
    def centered(cls, half):
        return cls(-half, half, -half, half)

    def _axis(self, grid, a, b):
        lo = int(np.ceil(a / grid.h - 1e-9)) + grid.n // 2
        hi = int(np.floor(b / grid.h + 1e-9)) + grid.n // 2
        if lo < 0 or hi > grid.n - 1 or hi < lo:
            raise DomainError(f"box {self} does not fit the grid")
        return slice(lo, hi + 1)

    def slices(self, grid):
        return self._axis(grid, self.x0, self.x1), self._axis(grid, self.y0, self.y1)

    def mask(self, grid):
        m = np.zeros(grid.shape, dtype=bool)
        m[self.slices(grid)] = True
        return m

    def fattened(self, r):
        return Box(self.x0 - r, self.x1 + r, self.y0 - r, self.y1 + r)


def as_box(region, grid):
    """None means the whole grid, a number n means the box P_n."""
    if region is None:
        hw = grid.half_width
        return Box(-hw, hw - grid.h, -hw, hw - grid.h)
    if isinstance(region, Box):
        return region
    return Box.centered(float(region))
