"""Uniform lattices, sampled fields and finite-difference calculus.

Arrays are indexed ``values[i, j]`` with ``i`` running along the first
coordinate and ``j`` along the second, so ``values[i, j]`` is the sample at
``(x1[i], x2[j])``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import GridError, NonFiniteError

# points this close to the bounding box (relative to its width) count as inside
_BOX_SLACK = 1e-12
# snap interpolation offsets this close to an integer onto the node
_NODE_SNAP = 1e-12


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 3 or self.n2 < 3:
            raise GridError(f"grid needs at least 3 nodes per axis, got {self.n1}x{self.n2}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise GridError("grid bounds must satisfy min < max on both axes")

    @classmethod
    def square(cls, R: float, n: int) -> "Grid":
        """The n x n lattice on [-R, R]^2 (origin is a node when n is odd)."""
        return cls(-R, R, -R, R, n, n)

    @property
    def h1(self) -> float:
        return (self.x_max - self.x_min) / (self.n1 - 1)

    @property
    def h2(self) -> float:
        return (self.y_max - self.y_min) / (self.n2 - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def x1(self) -> np.ndarray:
        # endpoints are set exactly rather than accumulated
        return np.linspace(self.x_min, self.x_max, self.n1)

    @property
    def x2(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.n2)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def node(self, i: int, j: int) -> tuple[float, float]:
        if not (0 <= i < self.n1 and 0 <= j < self.n2):
            raise GridError(f"node ({i}, {j}) outside {self.n1}x{self.n2} grid")
        return float(self.x1[i]), float(self.x2[j])

    def contains(self, x1, x2) -> np.ndarray:
        s1 = _BOX_SLACK * (self.x_max - self.x_min)
        s2 = _BOX_SLACK * (self.y_max - self.y_min)
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return ((x1 >= self.x_min - s1) & (x1 <= self.x_max + s1)
                & (x2 >= self.y_min - s2) & (x2 <= self.y_max + s2))

    def header(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "y_min": self.y_min,
                "y_max": self.y_max, "n1": self.n1, "n2": self.n2}


def _frozen(a: np.ndarray, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a scalar field on a :class:`Grid`, optionally masked.

    ``mask[i, j]`` is True where the sample is valid. Values off the mask
    may be NaN.
    """

    grid: Grid
    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != self.grid.shape:
            raise GridError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)
        if self.mask is not None:
            m = _frozen(self.mask, dtype=bool)
            if m.shape != self.grid.shape:
                raise GridError("mask shape does not match grid")
            if not interior_mask(self.grid, m).any():
                raise GridError("mask has no interior node")
            object.__setattr__(self, "mask", m)
        bad = ~np.isfinite(vals) & self.valid
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise NonFiniteError(f"non-finite value at valid node ({i}, {j}) = {self.grid.node(i, j)}")

    @property
    def valid(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return self.mask

    def with_mask(self, mask: Optional[np.ndarray]) -> "GridFunction":
        return GridFunction(self.grid, self.values, mask)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, values, self.mask)

    def sup(self) -> float:
        """Max of |values| over valid nodes."""
        return float(np.max(np.abs(self.values[self.valid])))

    def scale(self) -> float:
        return max(1.0, self.sup())


@dataclass(frozen=True, eq=False)
class HessianField:
    grid: Grid
    d11: np.ndarray
    d12: np.ndarray
    d22: np.ndarray

    def __post_init__(self):
        for name in ("d11", "d12", "d22"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def det(self) -> np.ndarray:
        return self.d11 * self.d22 - self.d12 * self.d12

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        mean = 0.5 * (self.d11 + self.d22)
        rad = np.hypot(0.5 * (self.d11 - self.d22), self.d12)
        return mean - rad, mean + rad

    def lambda_min(self) -> np.ndarray:
        return self.eigenvalues()[0]

    def spectral_norm(self) -> np.ndarray:
        lo, hi = self.eigenvalues()
        return np.maximum(np.abs(lo), np.abs(hi))

    def at(self, i: int, j: int) -> np.ndarray:
        return np.array([[self.d11[i, j], self.d12[i, j]],
                         [self.d12[i, j], self.d22[i, j]]])


def interior_mask(grid: Grid, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Nodes off the grid edge whose full 3x3 neighbourhood is valid."""
    m = np.ones(grid.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    out = np.zeros(grid.shape, dtype=bool)
    core = m[1:-1, 1:-1].copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            core &= m[1 + di:grid.n1 - 1 + di, 1 + dj:grid.n2 - 1 + dj]
    out[1:-1, 1:-1] = core
    return out


def disc_mask(grid: Grid, R: float, center=(0.0, 0.0)) -> np.ndarray:
    """Nodes of the closed disc of radius R (with rounding slack)."""
    X1, X2 = grid.mesh()
    r = np.hypot(X1 - center[0], X2 - center[1])
    return r <= R * (1 + 1e-12)


def _evaluate(evaluator: Callable, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(evaluator(X1, X2), dtype=float)
    except (TypeError, ValueError):
        out = None
    if out is None or out.shape != X1.shape:
        if out is not None and out.ndim == 0:
            return np.full(X1.shape, float(out))
        out = np.vectorize(lambda a, b: float(evaluator(a, b)), otypes=[float])(X1, X2)
    return out


def sample(evaluator: Callable, grid: Grid, mask: Optional[np.ndarray] = None) -> GridFunction:
    """Evaluate ``evaluator(x1, x2)`` at every node.

    The evaluator may be vectorised (called once with the full meshgrid) or
    scalar (falls back to elementwise evaluation).
    """
    X1, X2 = grid.mesh()
    with np.errstate(all="ignore"):
        vals = _evaluate(evaluator, X1, X2)
    bad = ~np.isfinite(vals)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NonFiniteError(f"evaluator is not finite at node ({i}, {j}) = {grid.node(i, j)}")
    return GridFunction(grid, vals, mask)


def fd_gradient(u: GridFunction) -> tuple[GridFunction, GridFunction]:
    """Central differences inside, second-order one-sided on the edges."""
    g = u.grid
    d1, d2 = np.gradient(u.values, g.h1, g.h2, edge_order=2)
    return GridFunction(g, d1, u.mask), GridFunction(g, d2, u.mask)


def _second_difference(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    if v.shape[0] >= 4:
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
        out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)


def hessian_arrays(values: np.ndarray, h1: float, h2: float):
    d11 = _second_difference(values, h1, 0)
    d22 = _second_difference(values, h2, 1)
    # gradient-of-gradient reduces to the 4-point cross stencil at interior nodes
    d12 = np.gradient(np.gradient(values, h1, axis=0, edge_order=2), h2, axis=1, edge_order=2)
    return d11, d12, d22


def fd_hessian(u: GridFunction) -> HessianField:
    g = u.grid
    return HessianField(g, *hessian_arrays(u.values, g.h1, g.h2))


def ma_residual(u: GridFunction, f: GridFunction) -> GridFunction:
    """det(fd_hessian(u)) - f at interior nodes; NaN and masked elsewhere."""
    if u.grid != f.grid:
        raise GridError("u and f live on different grids")
    inner = interior_mask(u.grid, u.mask)
    res = np.full(u.grid.shape, np.nan)
    res[inner] = fd_hessian(u).det()[inner] - f.values[inner]
    return GridFunction(u.grid, res, inner)


class ConvexityResult(NamedTuple):
    convex: bool
    node: tuple[int, int]
    lambda_min: float

    def __bool__(self):
        return self.convex


def default_convexity_tol(u: GridFunction) -> float:
    return 1e-10 * u.scale()


def convexity_check(u: GridFunction, tol: Optional[float] = None) -> ConvexityResult:
    """Smallest Hessian eigenvalue over interior nodes against ``-tol``."""
    if tol is None:
        tol = default_convexity_tol(u)
    inner = interior_mask(u.grid, u.mask)
    lam = np.where(inner, fd_hessian(u).lambda_min(), np.inf)
    k = int(np.argmin(lam))  # first minimiser in C order
    i, j = np.unravel_index(k, lam.shape)
    value = float(lam[i, j])
    return ConvexityResult(value >= -tol, (int(i), int(j)), value)


def _lagrange4(t: np.ndarray) -> np.ndarray:
    return np.stack([
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ])


def _stencil(x: np.ndarray, lo: float, h: float, n: int, width: int):
    s = (x - lo) / h
    r = np.rint(s)
    s = np.where(np.abs(s - r) < _NODE_SNAP * np.maximum(1.0, np.abs(r)), r, s)
    first = np.floor(s).astype(int) - (width // 2 - 1)
    first = np.clip(first, 0, n - width)
    return first, s - first


def interpolate_array(grid: Grid, values: np.ndarray, x1, x2) -> np.ndarray:
    """Interpolate raw node values at arbitrary points inside the grid box.

    Tensor-product cubic Lagrange on the 4x4 block of nodes around each
    point, shifted inward near the edges so that every point keeps a full
    cubic stencil; reproduces bicubic polynomials. Grids with fewer than
    four nodes on an axis drop to linear on that axis.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    shape = np.broadcast(x1, x2).shape
    x1 = np.broadcast_to(x1, shape).ravel()
    x2 = np.broadcast_to(x2, shape).ravel()
    inside = grid.contains(x1, x2)
    if not inside.all():
        k = int(np.argmin(inside))
        raise GridError(f"point ({x1[k]}, {x2[k]}) is outside the grid box")

    w1n = 4 if grid.n1 >= 4 else 2
    w2n = 4 if grid.n2 >= 4 else 2
    i0, t1 = _stencil(x1, grid.x_min, grid.h1, grid.n1, w1n)
    j0, t2 = _stencil(x2, grid.y_min, grid.h2, grid.n2, w2n)
    w1 = _lagrange4(t1) if w1n == 4 else np.stack([1.0 - t1, t1])
    w2 = _lagrange4(t2) if w2n == 4 else np.stack([1.0 - t2, t2])
    out = np.zeros(x1.shape)
    for a in range(w1n):
        row = np.zeros(x1.shape)
        for b in range(w2n):
            row += w2[b] * values[i0 + a, j0 + b]
        out += w1[a] * row
    return out.reshape(shape)


def interpolate(u: GridFunction, point) -> float:
    """Value of ``u`` at a single point of its grid box."""
    p = np.asarray(point, dtype=float)
    return float(interpolate_array(u.grid, u.values, p[0], p[1]))


def interpolate_many(u: GridFunction, x1, x2) -> np.ndarray:
    return interpolate_array(u.grid, u.values, x1, x2)
