"""Supporting planes, the modulus of convexity and boundary quantities.

The modulus of convexity of ``u`` at scale ``t`` is

    m(t) = inf { u(x) - l_z(x) : |x - z| > t },

with ``l_z`` the supporting plane at ``z``; the infimum is taken jointly
over interior touching points ``z`` and admissible ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import GridError, NonConvexError
from .grid import (
    GridFunction,
    fd_gradient,
    interior_mask,
    interpolate_array,
)
from .gridio import dumps_records

# largest s with exp(s) finite in double precision
EXP_LIMIT = math.log(np.finfo(float).max)

COARSE_CAP = 64
REFINE_FACTOR = 4
# pair-scan block size (number of z-x pairs evaluated per numpy call)
_PAIR_BLOCK = 1 << 22


@dataclass(frozen=True)
class SupportingPlane:
    z: tuple[float, float]
    value_at_z: float
    slope: tuple[float, float]

    def __call__(self, x1, x2):
        return (self.value_at_z + self.slope[0] * (np.asarray(x1) - self.z[0])
                + self.slope[1] * (np.asarray(x2) - self.z[1]))


def _gradient_arrays(u: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    d1, d2 = fd_gradient(u)
    return d1.values, d2.values


def _cell_ok(u: GridFunction, region: np.ndarray, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """True where the grid cell containing each point has all four corners in ``region``."""
    g = u.grid
    inside = g.contains(p1, p2)
    s1 = np.clip((p1 - g.x_min) / g.h1, 0, g.n1 - 1)
    s2 = np.clip((p2 - g.y_min) / g.h2, 0, g.n2 - 1)
    i0 = np.clip(np.floor(s1).astype(int), 0, g.n1 - 2)
    j0 = np.clip(np.floor(s2).astype(int), 0, g.n2 - 2)
    ok = region[i0, j0] & region[i0 + 1, j0] & region[i0, j0 + 1] & region[i0 + 1, j0 + 1]
    return inside & ok


def supporting_plane(u: GridFunction, z, tol: Optional[float] = None,
                     check: bool = True) -> SupportingPlane:
    """Plane through ``(z, u(z))`` with slope the interpolated FD gradient.

    With ``check`` the plane is verified to stay below ``u`` at every valid
    node up to ``tol`` (default ``1e-8 * max(1, sup|u|)``); a violation means
    the input is not convex.
    """
    z1, z2 = float(z[0]), float(z[1])
    inner = interior_mask(u.grid, u.mask)
    if not _cell_ok(u, inner, np.array([z1]), np.array([z2]))[0]:
        raise GridError(f"touching point {(z1, z2)} is not interior to the domain")
    g1, g2 = _gradient_arrays(u)
    value = float(interpolate_array(u.grid, u.values, z1, z2))
    slope = (float(interpolate_array(u.grid, g1, z1, z2)),
             float(interpolate_array(u.grid, g2, z1, z2)))
    plane = SupportingPlane((z1, z2), value, slope)
    if check:
        if tol is None:
            tol = 1e-8 * u.scale()
        X1, X2 = u.grid.mesh()
        gap = np.where(u.valid, u.values - plane(X1, X2), np.inf)
        k = np.unravel_index(int(np.argmin(gap)), gap.shape)
        if gap[k] < -tol:
            raise NonConvexError(
                f"supporting plane at {(z1, z2)} lies above u by {-gap[k]:.3e} at node {tuple(map(int, k))}")
    return plane


class ModulusResult(NamedTuple):
    m: float
    z: tuple[float, float]
    x: tuple[float, float]


def _scan_pairs(zp, zu, zg, xp, xu, t, best):
    """Minimise u(x) - u(z) - Du(z).(x - z) over pairs with |x - z| > t.

    ``best`` is the incumbent (value, z, x); only strictly smaller values
    replace it, so the earliest minimiser in scan order wins ties.
    """
    nz, nx = len(zp), len(xp)
    if nz == 0 or nx == 0:
        return best
    rows = max(1, _PAIR_BLOCK // nx)
    t2 = t * t
    for start in range(0, nz, rows):
        sl = slice(start, min(nz, start + rows))
        d1 = xp[None, :, 0] - zp[sl, None, 0]
        d2 = xp[None, :, 1] - zp[sl, None, 1]
        gap = xu[None, :] - zu[sl, None] - zg[sl, None, 0] * d1 - zg[sl, None, 1] * d2
        gap = np.where(d1 * d1 + d2 * d2 > t2, gap, np.inf)
        k = int(np.argmin(gap))
        a, c = divmod(k, nx)
        if gap[a, c] < best[0]:
            best = (float(gap[a, c]), tuple(zp[start + a]), tuple(xp[c]))
    return best


def modulus_of_convexity(u: GridFunction, t: float, refinement: int = 3) -> ModulusResult:
    """Discrete modulus of convexity at scale ``t``.

    A brute-force pair scan runs on a node subset of at most 64 per axis;
    each refinement level then rescans windows around the incumbent ``z``
    and ``x`` at a 4x finer spacing, with values and gradients taken from
    cubic interpolation. The incumbent is carried across levels, so the
    result never increases with ``refinement``.
    """
    g = u.grid
    if not t > 0:
        raise ValueError("t must be positive")
    valid = u.valid & np.isfinite(u.values)
    inner = interior_mask(g, valid)
    g1, g2 = _gradient_arrays(u)

    n = max(g.n1, g.n2)
    stride = max(1, math.ceil(n / COARSE_CAP))
    i_idx = np.arange((g.n1 // 2) % stride, g.n1, stride)
    j_idx = np.arange((g.n2 // 2) % stride, g.n2, stride)
    sub = np.zeros(g.shape, dtype=bool)
    sub[np.ix_(i_idx, j_idx)] = True
    X1, X2 = g.mesh()

    zsel = sub & inner
    xsel = sub & valid
    zp = np.column_stack([X1[zsel], X2[zsel]])
    xp = np.column_stack([X1[xsel], X2[xsel]])
    if zp.size and xp.size:
        span = np.hypot(xp[:, 0].max() - zp[:, 0].min(), xp[:, 1].max() - zp[:, 1].min())
    else:
        span = 0.0
    best = (np.inf, None, None)
    best = _scan_pairs(zp, u.values[zsel], np.column_stack([g1[zsel], g2[zsel]]),
                       xp, u.values[xsel], t, best)
    if best[1] is None:
        # coarse subset too sparse; fall back to every node
        zp = np.column_stack([X1[inner], X2[inner]])
        xp = np.column_stack([X1[valid], X2[valid]])
        best = _scan_pairs(zp, u.values[inner], np.column_stack([g1[inner], g2[inner]]),
                           xp, u.values[valid], t, best)
    if best[1] is None:
        raise ValueError(f"no admissible pair with |x - z| > {t} (domain span {span:.4g})")

    spacing = stride * min(g.h1, g.h2)
    offsets = np.arange(-2 * REFINE_FACTOR, 2 * REFINE_FACTOR + 1)
    for _ in range(refinement):
        spacing /= REFINE_FACTOR
        o1, o2 = np.meshgrid(offsets * spacing, offsets * spacing, indexing="ij")
        o1, o2 = o1.ravel(), o2.ravel()
        zc1, zc2 = best[1][0] + o1, best[1][1] + o2
        xc1, xc2 = best[2][0] + o1, best[2][1] + o2
        zk = _cell_ok(u, inner, zc1, zc2)
        xk = _cell_ok(u, valid, xc1, xc2)
        zc1, zc2, xc1, xc2 = zc1[zk], zc2[zk], xc1[xk], xc2[xk]
        zu = interpolate_array(g, u.values, zc1, zc2)
        zg = np.column_stack([interpolate_array(g, g1, zc1, zc2),
                              interpolate_array(g, g2, zc1, zc2)])
        xu = interpolate_array(g, u.values, xc1, xc2)
        best = _scan_pairs(np.column_stack([zc1, zc2]), zu, zg,
                           np.column_stack([xc1, xc2]), xu, t, best)
    return ModulusResult(best[0], tuple(map(float, best[1])), tuple(map(float, best[2])))


@dataclass(frozen=True)
class BoundaryData:
    R: float
    m0: float
    b: float
    n_samples: int
    theta_m0: float = 0.0
    theta_b: float = 0.0


def circle_points(R: float, n_samples: int, center=(0.0, 0.0)):
    theta = 2.0 * np.pi * np.arange(n_samples) / n_samples
    return theta, center[0] + R * np.cos(theta), center[1] + R * np.sin(theta)


def boundary_data(u: GridFunction, R: float, n_samples: int = 720,
                  center=(0.0, 0.0)) -> BoundaryData:
    """inf of u and sup of |Du| over equispaced samples of the circle |x| = R."""
    if n_samples < 720:
        raise ValueError("boundary sampling needs at least 720 points")
    theta, p1, p2 = circle_points(R, n_samples, center)
    if not u.grid.contains(p1, p2).all():
        raise GridError(f"circle of radius {R} leaves the grid box")
    vals = interpolate_array(u.grid, u.values, p1, p2)
    g1, g2 = _gradient_arrays(u)
    gn = np.hypot(interpolate_array(u.grid, g1, p1, p2), interpolate_array(u.grid, g2, p1, p2))
    km, kb = int(np.argmin(vals)), int(np.argmax(gn))
    return BoundaryData(float(R), float(vals[km]), float(gn[kb]), n_samples,
                        float(theta[km]), float(theta[kb]))


class LowerBound(NamedTuple):
    value: float
    underflow: bool


def modulus_lower_bound(b: float, t: float, C0: float) -> LowerBound:
    """(b t / 2) / (exp(128 C0 b^2 / t^2) - 1), saturating to 0 past the exp range."""
    if not (b > 0 and t > 0 and C0 > 0):
        raise ValueError("b, t and C0 must be positive")
    s = 128.0 * C0 * b * b / (t * t)
    if s > EXP_LIMIT:
        return LowerBound(0.0, True)
    return LowerBound(0.5 * b * t / math.expm1(s), False)


@dataclass
class ModulusCurve:
    t: np.ndarray
    m: np.ndarray
    pairs: list = field(default_factory=list)
    lower_bound: Optional[np.ndarray] = None

    def rows(self):
        lb = self.lower_bound if self.lower_bound is not None else np.full(len(self.t), np.nan)
        for t, m, low in zip(self.t, self.m, lb):
            ratio = m / low if low > 0 else math.inf
            yield {"t": float(t), "m_discrete": float(m), "lower_bound": float(low),
                   "slack_ratio": float(ratio)}

    def to_csv(self) -> str:
        return dumps_records(self.rows(), ["t", "m_discrete", "lower_bound", "slack_ratio"])


def modulus_curve(u: GridFunction, ts: Sequence[float], C0: Optional[float] = None,
                  refinement: int = 3) -> ModulusCurve:
    ms, pairs, lbs = [], [], []
    for t in ts:
        res = modulus_of_convexity(u, t, refinement)
        ms.append(res.m)
        pairs.append((res.z, res.x))
        if C0 is not None:
            lbs.append(modulus_lower_bound(boundary_data(u, t).b, t, C0).value)
    return ModulusCurve(np.asarray(ts, float), np.asarray(ms), pairs,
                        np.asarray(lbs) if C0 is not None else None)
