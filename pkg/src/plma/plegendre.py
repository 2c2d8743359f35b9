"""Partial Legendre transform in the first variable and the map P.

For convex ``u`` on the disc B_R the transform is taken slice by slice,

    u*(y1, y2) = sup { x1*y1 - u(x1, y2) : (x1, y2) in B_R },

and the associated coordinate change is P(x) = (d1 u(x), x2). On P(B_R)
the transform satisfies

    u*_11 = 1/u_11,   u*_12 = -u_12/u_11,   u*_22 = -f/u_11,

so u* solves the quasilinear equation u*_11 f(u*_1, y2) + u*_22 = 0.

Each slice is handled in two stages. The discrete stage reduces the slice
samples to their lower convex hull and merges hull slopes with the sorted
y1-lattice in linear time, which yields the discrete maximiser (ties go to
the smallest x1). The refinement stage then locates the maximiser of
x1*y1 - S(x1) inside the hull cell around it, where S is the not-a-knot
cubic spline through the slice; this makes u* accurate to O(h^4), which
second differences of u* need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .convexity import circle_points
from .errors import GridError, NonConvexError
from .grid import (
    Grid,
    GridFunction,
    disc_mask,
    fd_gradient,
    fd_hessian,
    interior_mask,
    interpolate_array,
)

_BISECTIONS = 64
DEGENERATE_U11 = 1e-8


def _infer_radius(grid: Grid) -> float:
    return min(grid.x_max, -grid.x_min, grid.y_max, -grid.y_min)


def _row_splines(xs: np.ndarray, V: np.ndarray):
    """Cubic-spline coefficients for every row, laid out on the shared lattice.

    Returns ``(C, lo, hi)`` where ``C[:, r, k]`` are the power-basis
    coefficients on cell ``[xs[k], xs[k+1]]`` and ``lo[r]..hi[r]`` is the
    range of cells covered by finite samples (evaluation clamps to it, i.e.
    extrapolates with the end polynomials).
    """
    nrows, n = V.shape
    C = np.full((4, nrows, n - 1), np.nan)
    lo = np.zeros(nrows, dtype=int)
    hi = np.full(nrows, -1, dtype=int)
    finite = np.isfinite(V)
    full = finite.all(axis=1)
    if full.any():
        sp = CubicSpline(xs, V[full].T, axis=0, bc_type="not-a-knot")
        C[:, full, :] = np.transpose(sp.c, (0, 2, 1))
        lo[full], hi[full] = 0, n - 2
    for r in np.flatnonzero(~full):
        idx = np.flatnonzero(finite[r])
        if idx.size < 2:
            continue
        if np.any(np.diff(idx) != 1):
            raise GridError(f"row {r} has a non-contiguous set of finite samples")
        a, b = idx[0], idx[-1]
        if b - a >= 3:
            sp = CubicSpline(xs[a:b + 1], V[r, a:b + 1], bc_type="not-a-knot")
            C[:, r, a:b] = sp.c
        else:
            # too short for a cubic: linear pieces
            C[:, r, a:b] = 0.0
            C[2, r, a:b] = np.diff(V[r, a:b + 1]) / np.diff(xs[a:b + 1])
            C[3, r, a:b] = V[r, a:b]
        lo[r], hi[r] = a, b - 1
    return C, lo, hi


def _spline_eval(C, lo, hi, xs, rows, x, deriv=False):
    h = xs[1] - xs[0]
    seg = np.floor((x - xs[0]) / h).astype(int)
    seg = np.clip(seg, lo[rows], hi[rows])
    dx = x - xs[seg]
    c0, c1, c2, c3 = (C[k, rows, seg] for k in range(4))
    if deriv:
        return (3.0 * c0 * dx + 2.0 * c1) * dx + c2
    return ((c0 * dx + c1) * dx + c2) * dx + c3


def slice_conjugate(xs: np.ndarray, V: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                    ys: np.ndarray, tol: Optional[float] = None, check_convex: bool = True,
                    refine: bool = True):
    """Row-wise conjugate ``sup_{lo<=x<=hi} (x*y - v_r(x))`` on the lattice ``ys``.

    ``xs`` is the shared uniform abscissa of the rows of ``V``; ``lo`` and
    ``hi`` bound the admissible x per row (NaN for rows with no domain).
    Returns ``(values, argmax, discrete_values)`` each of shape
    ``(nrows, len(ys))``. With ``refine=False`` the spline stage is skipped
    and values are the exact conjugate of the piecewise-linear interpolant,
    which is monotone and 1-Lipschitz in the row data.
    """
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    nrows, n = V.shape
    m = ys.size
    h = xs[1] - xs[0]
    slack = 1e-12 * max(1.0, abs(xs[0]), abs(xs[-1]))
    has_domain = np.isfinite(lo) & np.isfinite(hi)
    use = (has_domain[:, None] & (xs[None, :] >= lo[:, None] - slack)
           & (xs[None, :] <= hi[:, None] + slack) & np.isfinite(V))

    if check_convex:
        if tol is None:
            tol = 1e-10 * max(1.0, float(np.nanmax(np.abs(np.where(use, V, np.nan)))))
        d2 = (V[:, 2:] - 2.0 * V[:, 1:-1] + V[:, :-2]) / (h * h)
        triple = use[:, 2:] & use[:, 1:-1] & use[:, :-2]
        bad = triple & (d2 < -tol)
        if bad.any():
            r, k = np.argwhere(bad)[0]
            raise NonConvexError(
                f"slice {r} is not convex near x1={xs[k + 1]:.6g} (second difference {d2[r, k]:.3e})")

    kstar = np.empty((nrows, m), dtype=np.int64)
    kprev = np.empty_like(kstar)
    knext = np.empty_like(kstar)
    _kernels.hull_merge(xs, np.where(use, V, 0.0), use, ys, kstar, kprev, knext)

    out = np.full((nrows, m), np.nan)
    arg = np.full((nrows, m), np.nan)
    disc = np.full((nrows, m), np.nan)

    rows_idx, cols_idx = np.nonzero(has_domain[:, None] & np.ones((1, m), bool))
    if rows_idx.size == 0:
        return out, arg, disc
    Y = ys[cols_idx]
    ks = kstar[rows_idx, cols_idx]
    empty = ks < 0
    if not refine:
        kk = np.maximum(ks, 0)
        dval = np.where(empty, np.nan, xs[kk] * Y - V[rows_idx, kk])
        out[rows_idx, cols_idx] = dval
        arg[rows_idx, cols_idx] = np.where(empty, np.nan, xs[kk])
        disc[rows_idx, cols_idx] = dval
        return out, arg, disc
    C, clo, chi = _row_splines(xs, V)
    kp = kprev[rows_idx, cols_idx]
    kn = knext[rows_idx, cols_idx]
    a = np.where(kp >= 0, xs[np.maximum(kp, 0)], lo[rows_idx])
    b = np.where(kn >= 0, xs[np.maximum(kn, 0)], hi[rows_idx])
    a = np.maximum(a, lo[rows_idx])
    b = np.minimum(b, hi[rows_idx])
    ga = _spline_eval(C, clo, chi, xs, rows_idx, a, deriv=True) - Y
    gb = _spline_eval(C, clo, chi, xs, rows_idx, b, deriv=True) - Y
    left, right = a.copy(), b.copy()
    for _ in range(_BISECTIONS):
        mid = 0.5 * (left + right)
        gm = _spline_eval(C, clo, chi, xs, rows_idx, mid, deriv=True) - Y
        go_right = gm < 0
        left = np.where(go_right, mid, left)
        right = np.where(go_right, right, mid)
    xstar = 0.5 * (left + right)
    xstar = np.where(ga >= 0, a, np.where(gb <= 0, b, xstar))
    refined = xstar * Y - _spline_eval(C, clo, chi, xs, rows_idx, xstar)

    kk = np.maximum(ks, 0)
    dval = xs[kk] * Y - V[rows_idx, kk]
    # a node-free domain (single point not on the lattice) only has the refined value
    dval = np.where(empty, -np.inf, dval)
    better = refined >= dval
    out[rows_idx, cols_idx] = np.where(better, refined, dval)
    arg[rows_idx, cols_idx] = np.where(better, xstar, xs[kk])
    disc[rows_idx, cols_idx] = np.where(empty, np.nan, dval)
    return out, arg, disc


@dataclass(frozen=True, eq=False)
class PMapSamples:
    """Images y = (d1 u(x), x2) of the valid x-nodes."""

    x1: np.ndarray
    x2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    rows: np.ndarray

    def injective(self, tol: float = 0.0) -> bool:
        """True when y1 strictly increases with x1 along every slice."""
        for r in np.unique(self.rows):
            sel = self.rows == r
            order = np.argsort(self.x1[sel], kind="stable")
            if np.any(np.diff(self.y1[sel][order]) <= tol):
                return False
        return True


def pmap(u: GridFunction) -> PMapSamples:
    d1, _ = fd_gradient(u)
    X1, X2 = u.grid.mesh()
    sel = u.valid
    rows = np.broadcast_to(np.arange(u.grid.n2)[None, :], u.grid.shape)[sel]
    return PMapSamples(X1[sel], X2[sel], d1.values[sel], X2[sel].copy(), rows)


def boundary_image(u: GridFunction, R: float, n_samples: int):
    """P applied to equispaced samples of |x| = R: (theta, x-points, y-points)."""
    theta, p1, p2 = circle_points(R, n_samples)
    if not u.grid.contains(p1, p2).all():
        raise GridError(f"circle of radius {R} leaves the grid box")
    d1, _ = fd_gradient(u)
    y1 = interpolate_array(u.grid, d1.values, p1, p2)
    return theta, np.column_stack([p1, p2]), np.column_stack([y1, p2])


def points_in_polygon(poly: np.ndarray, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Even-odd rule for a closed polygon given by its vertex list."""
    q1 = np.asarray(q1, float)
    q2 = np.asarray(q2, float)
    inside = np.zeros(q1.shape, dtype=bool)
    a = poly
    b = np.roll(poly, -1, axis=0)
    for (ax, ay), (bx, by) in zip(a, b):
        if ay == by:
            continue
        straddle = (ay > q2) != (by > q2)
        xcross = ax + (q2 - ay) * (bx - ax) / (by - ay)
        inside ^= straddle & (q1 < xcross)
    return inside


@dataclass(frozen=True, eq=False)
class TransformResult:
    ustar: GridFunction
    argmax: np.ndarray
    discrete: np.ndarray
    R: float
    x_grid: Grid
    boundary_x: np.ndarray
    boundary_y: np.ndarray
    forward: PMapSamples

    @property
    def y_grid(self) -> Grid:
        return self.ustar.grid


def slice_bounds(x2: np.ndarray, R: float):
    half = np.sqrt(np.maximum(R * R - x2 * x2, 0.0))
    out = np.abs(x2) <= R * (1 + 1e-12)
    lo = np.where(out, -half, np.nan)
    hi = np.where(out, half, np.nan)
    return lo, hi


def partial_legendre(u: GridFunction, R: Optional[float] = None, n_y1: Optional[int] = None,
                     n_boundary: Optional[int] = None, tol: Optional[float] = None,
                     y1_range: Optional[tuple[float, float]] = None,
                     check_convex: bool = True, refine: bool = True) -> TransformResult:
    """Partial Legendre transform of ``u`` over the slices of the disc |x| <= R.

    ``u`` must be finite and slice-convex on its whole grid; the supremum
    runs over each sampled row, which on the mask P(B_R) coincides with the
    supremum over the disc slice. The
    y1-lattice spans the range of d1 u over P(B_R) with ``n_y1`` nodes
    (default: as many as the x1-lattice) and the y2-lattice is the x2-lattice.
    The validity mask is the set of y-nodes inside the polygon traced by P
    of ``n_boundary`` samples of the circle.
    """
    g = u.grid
    if not np.isfinite(u.values).all():
        raise GridError("partial_legendre needs u finite on the whole grid")
    if R is None:
        R = _infer_radius(g)
    if n_boundary is None:
        n_boundary = max(720, 8 * max(g.n1, g.n2))
    theta, bx, by = boundary_image(u, R, n_boundary)
    fwd = pmap(u.with_mask(disc_mask(g, R)))
    if y1_range is None:
        y1_range = (float(min(by[:, 0].min(), fwd.y1.min())),
                    float(max(by[:, 0].max(), fwd.y1.max())))
    if not y1_range[1] > y1_range[0]:
        raise NonConvexError("P(B_R) has an empty y1-range; u is degenerate")
    yg = Grid(y1_range[0], y1_range[1], g.y_min, g.y_max, n_y1 or g.n1, g.n2)

    # Maximise over the whole sampled row: for y in P(B_R) the maximiser is the
    # unique x1 with d1 u = y1, which lies in the disc slice, so masked values
    # equal the slice supremum while u* stays smooth across the mask edge.
    lo = np.full(g.n2, g.x_min)
    hi = np.full(g.n2, g.x_max)
    vals, arg, disc = slice_conjugate(g.x1, u.values.T, lo, hi, yg.x1, tol=tol,
                                      check_convex=check_convex, refine=refine)
    Y1, Y2 = yg.mesh()
    mask = points_in_polygon(by, Y1, Y2) & np.isfinite(vals.T)
    ustar = GridFunction(yg, vals.T, mask)
    return TransformResult(ustar, arg.T, disc.T, float(R), g, bx, by, fwd)


def inverse_partial_legendre(ustar: GridFunction, x_grid: Grid,
                             check_convex: bool = False, refine: bool = True) -> np.ndarray:
    """Transform back: sup over the whole y1-row of x1*y1 - u*(y1, x2).

    Requires the y2-lattice of ``ustar`` to coincide with the x2-lattice of
    ``x_grid``. Returns raw values on ``x_grid`` (NaN on rows where u* has
    no finite samples).
    """
    yg = ustar.grid
    if yg.n2 != x_grid.n2 or not np.allclose(yg.x2, x_grid.x2, rtol=0, atol=1e-12):
        raise GridError("y2-lattice of u* differs from the x2-lattice")
    V = ustar.values.T
    finite_rows = np.isfinite(V).any(axis=1)
    lo = np.where(finite_rows, yg.x_min, np.nan)
    hi = np.where(finite_rows, yg.x_max, np.nan)
    vals, _, _ = slice_conjugate(yg.x1, V, lo, hi, x_grid.x1, check_convex=check_convex,
                                 refine=refine)
    return vals.T


def involution_error(u: GridFunction, R: Optional[float] = None, **kw) -> float:
    """sup |(u*)* - u| over interior nodes of the disc."""
    if R is None:
        R = _infer_radius(u.grid)
    T = partial_legendre(u, R, **kw)
    back = inverse_partial_legendre(T.ustar, u.grid)
    region = interior_mask(u.grid, disc_mask(u.grid, R))
    return float(np.max(np.abs(back - u.values)[region]))


class IdentityResiduals(NamedTuple):
    r11: float
    r12: float
    r22: float
    n_nodes: int
    n_skipped: int


def derivative_identity_residuals(u: GridFunction, f: GridFunction, R: Optional[float] = None,
                                  transform: Optional[TransformResult] = None) -> IdentityResiduals:
    """Sup-norm mismatch between FD second derivatives of u* and their targets.

    Targets at y are (1/u11, -u12/u11, -f/u11) evaluated at the pre-image
    (x1*(y), y2). Nodes whose pre-image has u11 <= 1e-8 are skipped and
    counted separately.
    """
    if u.grid != f.grid:
        raise GridError("u and f live on different grids")
    T = transform if transform is not None else partial_legendre(u, R)
    yg = T.y_grid
    Hs = fd_hessian(T.ustar)
    nodes = interior_mask(yg, T.ustar.mask)
    if not nodes.any():
        raise GridError("transform mask has no interior node")
    Y1, Y2 = yg.mesh()
    px1, px2 = T.argmax[nodes], Y2[nodes]
    H = fd_hessian(u)
    g = u.grid
    u11 = interpolate_array(g, H.d11, px1, px2)
    u12 = interpolate_array(g, H.d12, px1, px2)
    fv = interpolate_array(g, f.values, px1, px2)
    keep = u11 > DEGENERATE_U11
    r11 = np.abs(Hs.d11[nodes] - 1.0 / u11)[keep]
    r12 = np.abs(Hs.d12[nodes] + u12 / u11)[keep]
    r22 = np.abs(Hs.d22[nodes] + fv / u11)[keep]
    return IdentityResiduals(float(r11.max(initial=0.0)), float(r12.max(initial=0.0)),
                             float(r22.max(initial=0.0)), int(keep.sum()), int((~keep).sum()))


def laplacian_sup(ustar: GridFunction) -> float:
    """sup |u*_11 + u*_22| over interior nodes of the mask."""
    H = fd_hessian(ustar)
    nodes = interior_mask(ustar.grid, ustar.mask)
    return float(np.max(np.abs(H.d11 + H.d22)[nodes]))


def fenchel_young_gap(u: GridFunction, T: TransformResult) -> float:
    """min over slice samples of u(x1) + u*(y1) - x1*y1 (nonnegative up to rounding)."""
    g = u.grid
    lo, hi = slice_bounds(g.x2, T.R)
    worst = math.inf
    x1 = g.x1
    y1 = T.y_grid.x1
    for j in range(g.n2):
        if not np.isfinite(lo[j]):
            continue
        sel = (x1 >= lo[j] - 1e-12) & (x1 <= hi[j] + 1e-12)
        if not sel.any():
            continue
        gap = u.values[sel, j][:, None] + T.ustar.values[:, j][None, :] - x1[sel][:, None] * y1[None, :]
        worst = min(worst, float(gap.min()))
    return worst


def delta_radius(m0: float, b: float, R: float) -> float:
    """Radius of a ball around 0 contained in P(B_R): min(m0/(2b), m0/(2R))."""
    if not (m0 > 0 and b > 0 and R > 0):
        raise ValueError("m0, b and R must be positive")
    return min(m0 / (2.0 * b), m0 / (2.0 * R))


@dataclass(frozen=True)
class BallInclusion:
    passed: bool
    delta: float
    min_boundary_norm: float
    theta_worst: float
    min_ray_hit: float
    phi_worst: float
    origin_enclosed: bool

    @property
    def failure(self) -> Optional[str]:
        if self.passed:
            return None
        if self.min_boundary_norm < self.delta:
            return f"|P(x)| = {self.min_boundary_norm:.6g} < delta at boundary angle {self.theta_worst:.6f}"
        if not self.origin_enclosed:
            return f"ray at angle {self.phi_worst:.6f} does not leave P(B_R) an odd number of times"
        return f"ray at angle {self.phi_worst:.6f} exits P(B_R) at radius {self.min_ray_hit:.6g} < delta"


def _ray_hits(poly: np.ndarray, phi: np.ndarray):
    d1, d2 = np.cos(phi)[:, None], np.sin(phi)[:, None]
    A = poly
    E = np.roll(poly, -1, axis=0) - poly
    ax, ay = A[None, :, 0], A[None, :, 1]
    ex, ey = E[None, :, 0], E[None, :, 1]
    denom = d1 * ey - d2 * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (ax * ey - ay * ex) / denom
        s = (ax * d2 - ay * d1) / denom
    hit = (denom != 0) & (r > 0) & (s >= 0) & (s < 1)
    count = hit.sum(axis=1)
    first = np.where(hit, r, np.inf).min(axis=1)
    return first, count


def verify_ball_inclusion(u: GridFunction, R: float, delta: float, n_samples: int = 720,
                          n_rays: Optional[int] = None) -> BallInclusion:
    """Check B_delta(0) inside P(B_R).

    (a) every sampled boundary image P(x), |x| = R, has norm >= delta;
    (b) every ray from the origin in a dense angular sweep crosses the image
    polygon an odd number of times and first leaves it at radius >= delta.
    """
    if n_samples < 720:
        raise ValueError("boundary sampling needs at least 720 points")
    theta, _, by = boundary_image(u, R, n_samples)
    norms = np.hypot(by[:, 0], by[:, 1])
    kb = int(np.argmin(norms))
    phi = 2.0 * np.pi * (np.arange(n_rays or 2 * n_samples) + 0.5) / (n_rays or 2 * n_samples)
    first, count = _ray_hits(by, phi)
    odd = count % 2 == 1
    kr = int(np.argmin(first))
    enclosed = bool(odd.all())
    if not enclosed:
        kr = int(np.argmin(odd))
    passed = bool(norms[kb] >= delta and enclosed and first[kr] >= delta)
    return BallInclusion(passed, float(delta), float(norms[kb]), float(theta[kb]),
                         float(first[kr]), float(phi[kr]), enclosed)

