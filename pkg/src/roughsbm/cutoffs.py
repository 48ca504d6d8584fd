"""Boxes, annulus forcings and localizers for the compact-support pipeline.

All profiles are functions of the sup-norm radius ``max(|x1|, |x2|)`` and use
a C^2 smoothstep across their transition annuli.
"""
from dataclasses import dataclass

import numpy as np

from .grid import DomainError, Box


def smoothstep(t):
    """C^2 ramp: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10 - 15 * t + 6 * t * t)


def ramp(r, a, b):
    """0 for r <= a, 1 for r >= b."""
    if b <= a:
        return (r >= b).astype(float)
    return smoothstep((r - a) / (b - a))


def annulus_forcing(r, n, m):
    """``m`` on ``n + 1/m <= r <= n + 1``, zero on ``r <= n`` and ``r >= n + 2``."""
    rise = ramp(r, n, n + 1.0 / m)
    fall = 1.0 - ramp(r, n + 1.0, n + 2.0)
    return m * rise * fall


def localizer(r, radius):
    """1 on the box of half-width ``radius - 2``, 0 outside ``radius - 1``."""
    return 1.0 - ramp(r, radius - 2.0, radius - 1.0)


@dataclass
class CutoffFamily:
    grid: object
    n: float
    m: float
    forcing: np.ndarray
    eta: dict

    @property
    def box(self):
        return Box.centered(self.n)

    def inner_box(self):
        """Open box ``(-n - 1/m, n + 1/m)^2``."""
        return Box.centered(self.n + 1.0 / self.m)

    def box_mask(self, half=None):
        return self.grid.box_mask(self.n if half is None else half)

    def localizer(self, radius):
        if radius not in self.eta:
            self.eta[radius] = build_localizer(self.grid, radius)
        return self.eta[radius]


def _check_fits(grid, half):
    if half > grid.half_width - grid.h:
        raise DomainError(f"box of half-width {half} does not fit in a grid of half-width "
                          f"{grid.half_width}")


def build_forcing(grid, n, m):
    if m < 0:
        raise ValueError("m must be non-negative")
    _check_fits(grid, n + 2)
    if m == 0:
        return np.zeros(grid.shape)
    return annulus_forcing(grid.sup_radius(), n, m)


def build_localizer(grid, radius):
    if radius <= 2:
        raise ValueError("localizer radius must exceed 2")
    _check_fits(grid, radius - 1)
    return localizer(grid.sup_radius(), radius)


def build_cutoffs(n, m, grid, radii=()):
    """Forcing for box ``n`` with height ``m`` and localizers at the given radii."""
    return CutoffFamily(grid, n, m, build_forcing(grid, n, m),
                        {r: build_localizer(grid, r) for r in radii})
