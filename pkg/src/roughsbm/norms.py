"""Local Holder-type seminorms, weighted Besov norms and parabolic norms.

Suprema over scales are maxima over the mollifier kit's finite scale grid;
suprema over point pairs are maxima over grid offsets, strided for large
radii.
"""
from dataclasses import dataclass, field

import numpy as np

from .grid import DomainError, as_box
from .littlewood_paley import lp_for


class InvariantError(ValueError):
    pass


@dataclass(frozen=True)
class Weight:
    """Polynomial ``(1+|x|)^a`` or exponential ``exp(l |x|^sigma)``; ``|x|`` is the max norm."""
    kind: str
    parameter: float
    sigma: float = 0.5

    def __post_init__(self):
        if self.kind not in ("polynomial", "exponential"):
            raise ValueError("kind must be 'polynomial' or 'exponential'")
        if self.kind == "polynomial" and self.parameter < 0:
            raise ValueError("polynomial weights need a >= 0")
        if self.kind == "exponential" and not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")

    @classmethod
    def parse(cls, text):
        """``p:a`` or ``e:l`` or ``e:l:sigma``."""
        parts = text.split(":")
        if parts[0] == "p":
            return cls("polynomial", float(parts[1]))
        if parts[0] == "e":
            return cls("exponential", float(parts[1]), float(parts[2]) if len(parts) > 2 else 0.5)
        raise ValueError(f"cannot parse weight {text!r}")

    def __str__(self):
        if self.kind == "polynomial":
            return f"p:{self.parameter:g}"
        return f"e:{self.parameter:g}:{self.sigma:g}"

    def at(self, r):
        """Weight as a function of the max-norm radius."""
        r = np.asarray(r, dtype=float)
        if self.kind == "polynomial":
            return (1 + r) ** self.parameter
        return np.exp(self.parameter * r**self.sigma)

    def __call__(self, grid):
        return self.at(grid.sup_radius())

    def control(self, r):
        """The control function of the weight class."""
        r = np.asarray(r, dtype=float)
        return np.log1p(r) if self.kind == "polynomial" else r**self.sigma

    @property
    def lam(self):
        return abs(self.parameter)

    def admissibility_ratio(self, x, y):
        """``theta(x) / (theta(y) exp(lam w(x - y)))`` for point arrays of shape (m, 2)."""
        x, y = np.asarray(x, float), np.asarray(y, float)
        rx = np.abs(x).max(axis=-1)
        ry = np.abs(y).max(axis=-1)
        rd = np.abs(x - y).max(axis=-1)
        return self.at(rx) / (self.at(ry) * np.exp(self.lam * self.control(rd)))


def theta_field(weight, grid):
    return np.ones(grid.shape) if weight is None else weight(grid)


@dataclass
class NormReport:
    symbol: str
    alpha: float
    region: object
    weight: object
    value: float
    argmax_scale: float = None
    argmax_point: tuple = None
    notes: dict = field(default_factory=dict)

    def row(self):
        return {
            "symbol": self.symbol, "alpha": self.alpha, "region": str(self.region),
            "weight": "none" if self.weight is None else str(self.weight),
            "value": self.value, "argmax_scale": self.argmax_scale,
            "argmax_point": None if self.argmax_point is None else list(self.argmax_point),
        }


def _point(grid, idx):
    c = grid.coords
    return (float(c[idx[0]]), float(c[idx[1]]))


def neg_holder_seminorm(f, alpha, region, kit, weight=None, symbol="f"):
    """``max_delta delta^-alpha sup_region |f_delta| / theta`` for alpha < 0."""
    if not alpha < 0:
        raise ValueError("alpha must be negative")
    grid = kit.grid
    box = as_box(region, grid)
    if region is not None:
        box.fattened(1.0).slices(grid)
    sx, sy = box.slices(grid)
    theta = theta_field(weight, grid)[sx, sy]
    best = (-1.0, None, None)
    for d in kit.delta_grid:
        a = np.abs(kit.mollify(f, d)[sx, sy]) / theta
        idx = np.unravel_index(np.argmax(a), a.shape)
        v = d**-alpha * a[idx]
        if v > best[0]:
            best = (float(v), d, (idx[0] + sx.start, idx[1] + sy.start))
    return NormReport(symbol, alpha, box, weight, best[0], best[1], _point(grid, best[2]))


def _offsets(r_cells, max_side=24):
    """Half-plane integer offsets with 0 < max(|a|,|b|) < r_cells, strided if large."""
    stride = max(1, int(np.ceil(r_cells / max_side)))
    top = int(np.ceil(r_cells))
    out = []
    for a in range(0, top + 1):
        for b in range(-top, top + 1):
            if a == 0 and b <= 0:
                continue
            m = max(a, abs(b))
            if m >= r_cells:
                continue
            if m > 4 and (a % stride or b % stride):
                continue
            out.append((a, b))
    return out


def _pair_views(arr, a, b):
    n0, n1 = arr.shape[-2:]
    x0, x1 = max(0, -a), n0 - max(0, a)
    y0, y1 = max(0, -b), n1 - max(0, b)
    if x1 <= x0 or y1 <= y0:
        return None, None
    first = arr[..., x0:x1, y0:y1]
    second = arr[..., x0 + a:x1 + a, y0 + b:y1 + b]
    return first, second


def holder_seminorm(f, alpha, region, r, grid, weight=None, max_side=24, symbol="f"):
    """``sup |f(x) - f(y)| / (theta(x) |x - y|^alpha)`` over pairs in the region at distance < r.

    ``f`` may carry a leading time axis; the sup also runs over it.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not r > grid.h:
        raise ValueError("r must exceed the grid spacing")
    box = as_box(region, grid)
    sx, sy = box.slices(grid)
    sub = np.asarray(f)[..., sx, sy]
    theta = theta_field(weight, grid)[sx, sy]
    best = (0.0, None)
    for a, b in _offsets(r / grid.h, max_side):
        p, q = _pair_views(sub, a, b)
        if p is None:
            continue
        tp, tq = _pair_views(theta, a, b)
        dist = max(abs(a), abs(b)) * grid.h
        v = np.abs(p - q) / np.minimum(tp, tq)
        m = float(v.max()) / dist**alpha
        if m > best[0]:
            best = (m, (a, b))
    return NormReport(symbol, alpha, box, weight, best[0],
                      notes={"offset": best[1], "r": r})


def holder_norm(f, alpha, region, grid, r=1.0, weight=None):
    """Sup norm plus the Holder seminorm at range r."""
    box = as_box(region, grid)
    sx, sy = box.slices(grid)
    theta = theta_field(weight, grid)[sx, sy]
    sup = float((np.abs(np.asarray(f)[..., sx, sy]) / theta).max())
    return sup + holder_seminorm(f, alpha, region, r, grid, weight).value


def besov_norm(f, alpha, grid, weight=None, return_block=False):
    """``max_j 2^{j alpha} || theta^-1 Delta_j f ||_inf`` over the resolved blocks."""
    lp = lp_for(grid)
    blocks = lp.blocks(f)
    theta = theta_field(weight, grid)
    vals = [2.0 ** (j * alpha) * float(np.abs(b / theta).max()) for j, b in zip(lp.indices, blocks)]
    k = int(np.argmax(vals))
    if return_block:
        return vals[k], lp.indices[k]
    return vals[k]


@dataclass
class TwoVariableField:
    """Values ``U(x, x + o)`` on base points x and integer offsets o.

    ``values`` has shape (..., n_base, n_offsets); offset ``(0, 0)`` must be
    included so that the diagonal can be checked.
    """
    grid: object
    base: np.ndarray
    offsets: np.ndarray
    values: np.ndarray
    nu: np.ndarray = None

    def offset_index(self, o):
        hits = np.nonzero((self.offsets == np.asarray(o)).all(axis=1))[0]
        if not len(hits):
            raise KeyError(o)
        return int(hits[0])

    def gradient(self):
        """Central difference of ``U(x, .)`` at ``x``."""
        h = self.grid.h
        ix = [self.offset_index((1, 0)), self.offset_index((-1, 0))]
        iy = [self.offset_index((0, 1)), self.offset_index((0, -1))]
        v = self.values
        gx = (v[..., ix[0]] - v[..., ix[1]]) / (2 * h)
        gy = (v[..., iy[0]] - v[..., iy[1]]) / (2 * h)
        return np.stack([gx, gy], axis=-1)

    def centered(self):
        """``U - nu (xbar - x)`` with ``nu`` the discrete gradient."""
        nu = self.gradient() if self.nu is None else self.nu
        disp = self.offsets * self.grid.h
        return self.values - np.einsum("...bk,ok->...bo", nu, disp)


def two_variable_holder(U, alpha, region=None, r=1.0, diagonal_tol=1e-12, symbol="U"):
    """``sup_x sup_{0 < |xbar - x| < r} |U - nu.(xbar - x)| / |xbar - x|^alpha``."""
    if not 1 < alpha < 2:
        raise ValueError("alpha must lie in (1, 2)")
    grid = U.grid
    d0 = U.values[..., U.offset_index((0, 0))]
    scale = max(1.0, float(np.abs(U.values).max()))
    if np.abs(d0).max() > diagonal_tol * scale:
        raise InvariantError("two-variable field does not vanish on the diagonal")
    base = np.asarray(U.base)
    keep = np.ones(len(base), dtype=bool)
    if region is not None:
        box = as_box(region, grid)
        c = grid.coords
        px, py = c[base[:, 0]], c[base[:, 1]]
        keep = (px >= box.x0 - 1e-12) & (px <= box.x1 + 1e-12) & (py >= box.y0 - 1e-12) & (py <= box.y1 + 1e-12)
    dist = np.abs(U.offsets).max(axis=1) * grid.h
    ok = (dist > 0) & (dist < r)
    ubar = U.centered()[..., keep, :][..., ok]
    ratio = np.abs(ubar) / dist[ok] ** alpha
    flat = int(np.argmax(ratio))
    idx = np.unravel_index(flat, ratio.shape)
    b = np.nonzero(keep)[0][idx[-2]]
    return NormReport(symbol, alpha, region, None, float(ratio.max()),
                      argmax_point=_point(grid, tuple(base[b])),
                      notes={"offset": tuple(int(v) for v in U.offsets[np.nonzero(ok)[0][idx[-1]]])})


def space_time_norm(f, times, alpha, grid, weight_schedule=None, r=1.0, region=None, max_slices=64):
    """Spatial Holder norm plus the time-Holder part of order alpha/2.

    ``weight_schedule`` maps t to a Weight (or None); the increment
    ``f(t) - f(s)`` is weighted with the later time's weight.
    """
    f = np.asarray(f)
    times = np.asarray(times, dtype=float)
    if f.ndim != 3 or len(times) < 2:
        raise DomainError("need at least two time slices")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    sel = np.unique(np.linspace(0, len(times) - 1, min(len(times), max_slices)).round().astype(int))
    box = as_box(region, grid)
    sx, sy = box.slices(grid)
    thetas = [theta_field(None if weight_schedule is None else weight_schedule(times[i]), grid)[sx, sy]
              for i in sel]
    spatial = 0.0
    for i, th in zip(sel, thetas):
        w = None if weight_schedule is None else weight_schedule(times[i])
        v = float((np.abs(f[i][sx, sy]) / th).max()) + holder_seminorm(f[i], alpha, box, r, grid, w).value
        spatial = max(spatial, v)
    temporal = 0.0
    for a in range(len(sel)):
        for b in range(a):
            i, j = sel[a], sel[b]
            inc = float((np.abs(f[i][sx, sy] - f[j][sx, sy]) / thetas[a]).max())
            temporal = max(temporal, inc / abs(times[i] - times[j]) ** (alpha / 2))
    return {"value": spatial + temporal, "spatial": spatial, "temporal": temporal}
