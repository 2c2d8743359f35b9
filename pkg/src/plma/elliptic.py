"""Dirichlet solver for  v_11 f(v_1, y2) + v_22 = 0  on a masked lattice.

The domain is a boolean mask. Mask nodes whose four lattice neighbours are
all in the mask are unknowns; the remaining mask nodes carry Dirichlet data
(nearest-node boundary, no cut cells). The frozen-coefficient problem
``a v_11 + v_22 = rhs`` is discretised with the 5-point stencil and solved
by red-black SOR; the quasilinear problem is handled by damped Picard
iteration around it.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import CoefficientBoundsError, ConvergenceError, GridError, StallError
from .grid import Grid, GridFunction, fd_gradient, fd_hessian, interior_mask

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_THETA = 0.5
DEFAULT_MAX_OUTER = 200
STALL_WINDOW = 10
STALL_FACTOR = 0.99
# sweeps between residual checks in the linear solver
CHECK_EVERY = 16
_BOUND_SLACK = 1e-12
DIVERGENCE_FACTOR = 1e3
# stencil-sum rounding, in units of eps * |v| * (1 + max a) * (1/h1^2 + 1/h2^2)
ROUNDOFF_FACTOR = 32.0
# the Picard residual cannot drop below what its inner solves reach
QUASI_FLOOR_FACTOR = 4.0


def unknown_nodes(mask: np.ndarray) -> np.ndarray:
    """Mask nodes with all four lattice neighbours in the mask."""
    m = np.asarray(mask, dtype=bool)
    out = np.zeros_like(m)
    out[1:-1, 1:-1] = (m[1:-1, 1:-1] & m[2:, 1:-1] & m[:-2, 1:-1]
                       & m[1:-1, 2:] & m[1:-1, :-2])
    return out


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    """Dirichlet problem for the quasilinear equation on ``grid``.

    ``boundary`` holds the Dirichlet values; only its entries on mask nodes
    that are not unknowns are read. ``coefficient(p1, y2)`` must be
    vectorised and is expected to stay within ``[1/C0, C0]``.
    """

    grid: Grid
    mask: np.ndarray
    coefficient: Callable
    C0: float
    boundary: np.ndarray

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.shape != self.grid.shape:
            raise GridError("mask shape does not match grid")
        if not self.C0 >= 1.0:
            raise ValueError(f"C0 must be >= 1, got {self.C0}")
        unk = unknown_nodes(m)
        if not unk.any():
            raise GridError("mask has no unknown (interior) node")
        _, ncomp = ndimage.label(unk)
        if ncomp != 1:
            raise GridError(f"mask interior has {ncomp} connected components")
        bvals = np.array(self.boundary, dtype=float)
        if bvals.shape != self.grid.shape:
            raise GridError("boundary array shape does not match grid")
        bnd = m & ~unk
        if not np.isfinite(bvals[bnd]).all():
            raise GridError("Dirichlet data is not finite on every boundary node")
        m.flags.writeable = False
        bvals.flags.writeable = False
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "boundary", bvals)

    @classmethod
    def from_function(cls, grid: Grid, mask: np.ndarray, coefficient: Callable,
                      C0: float, g: Callable) -> "EllipticProblem":
        """Dirichlet data sampled from ``g(y1, y2)`` on the mask boundary nodes."""
        m = np.asarray(mask, dtype=bool)
        Y1, Y2 = grid.mesh()
        bnd = m & ~unknown_nodes(m)
        vals = np.full(grid.shape, np.nan)
        with np.errstate(all="ignore"):
            vals[bnd] = np.asarray(g(Y1[bnd], Y2[bnd]), dtype=float)
        return cls(grid, m, coefficient, C0, vals)

    @property
    def unknown(self) -> np.ndarray:
        return unknown_nodes(self.mask)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return self.mask & ~self.unknown

    def coefficient_field(self, v: np.ndarray, clamp: bool = False):
        """f(d1 v, y2) on unknown nodes (1 elsewhere) and the count of clamped nodes."""
        g = self.grid
        unk = self.unknown
        p = np.zeros(g.shape)
        p[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2.0 * g.h1)
        _, Y2 = g.mesh()
        a = np.ones(g.shape)
        with np.errstate(all="ignore"):
            a[unk] = np.asarray(self.coefficient(p[unk], Y2[unk]), dtype=float) * np.ones(unk.sum())
        lo, hi = 1.0 / self.C0, self.C0
        out = unk & ~((a >= lo * (1 - _BOUND_SLACK)) & (a <= hi * (1 + _BOUND_SLACK)))
        if clamp:
            a[unk] = np.clip(np.nan_to_num(a[unk], nan=hi), lo, hi)
        return a, int(out.sum())


@dataclass
class SolveReport:
    outer_iterations: int = 0
    inner_iterations: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    final_residual: float = math.inf
    damping: float = DEFAULT_THETA
    wall_time: float = 0.0
    clamped: int = 0
    out_of_band: int = 0
    converged: bool = False

    def to_record(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "inner_iterations": list(self.inner_iterations),
            "residual_history": [float(r) for r in self.residual_history],
            "final_residual": float(self.final_residual),
            "damping": self.damping,
            "wall_time": self.wall_time,
            "clamped": self.clamped,
            "out_of_band": self.out_of_band,
            "converged": self.converged,
        }


def _omega(grid: Grid, unknown: np.ndarray, a: np.ndarray) -> float:
    """SOR parameter from the Jacobi spectral radius of the bounding box."""
    rows = np.flatnonzero(unknown.any(axis=1))
    cols = np.flatnonzero(unknown.any(axis=0))
    N1 = rows[-1] - rows[0] + 2
    N2 = cols[-1] - cols[0] + 2
    c1 = float(np.mean(a[unknown])) / grid.h1**2
    c2 = 1.0 / grid.h2**2
    rho = (c1 * math.cos(math.pi / N1) + c2 * math.cos(math.pi / N2)) / (c1 + c2)
    return 2.0 / (1.0 + math.sqrt(max(1.0 - rho * rho, 0.0)))


def _start(problem: EllipticProblem, initial: Optional[np.ndarray]) -> np.ndarray:
    v = np.zeros(problem.grid.shape)
    bnd = problem.boundary_nodes
    unk = problem.unknown
    v[bnd] = problem.boundary[bnd]
    if initial is not None:
        init = np.asarray(initial, dtype=float)
        v[unk] = init[unk]
        if not np.isfinite(v[unk]).all():
            raise GridError("initial iterate is not finite on the unknowns")
    else:
        v[unk] = float(np.mean(problem.boundary[bnd]))
    return v


def rounding_floor(problem: EllipticProblem, v: np.ndarray, a: np.ndarray) -> float:
    """Size of the stencil residual that rounding alone produces for ``v``."""
    g = problem.grid
    scale = max(1.0, float(np.abs(v[problem.mask]).max()))
    amax = float(a[problem.unknown].max())
    return ROUNDOFF_FACTOR * np.finfo(float).eps * scale * (1.0 + amax) * (1.0 / g.h1**2 + 1.0 / g.h2**2)


def linear_elliptic_solve(a, problem: EllipticProblem, tol: float = DEFAULT_TOL,
                          max_iter: int = 200_000, rhs: Optional[np.ndarray] = None,
                          initial: Optional[np.ndarray] = None,
                          report: Optional[SolveReport] = None,
                          check_bounds: bool = True) -> GridFunction:
    """Solve ``a v_11 + v_22 = rhs`` (rhs = 0 by default) with the problem's Dirichlet data.

    ``a`` is a GridFunction or array on the problem grid. Stops once the
    sup-norm stencil residual over the unknowns is <= ``tol``; ``max_iter``
    counts SOR sweeps. With ``rhs`` omitted the discrete maximum principle
    is asserted on the result.
    """
    g = problem.grid
    unk = problem.unknown
    a_arr = np.array(a.values if isinstance(a, GridFunction) else a, dtype=float)
    if a_arr.shape != g.shape:
        raise GridError("coefficient field does not match the problem grid")
    if check_bounds:
        vals = a_arr[unk]
        lo, hi = 1.0 / problem.C0, problem.C0
        bad = ~((vals >= lo * (1 - _BOUND_SLACK)) & (vals <= hi * (1 + _BOUND_SLACK)))
        if bad.any():
            raise CoefficientBoundsError(
                f"coefficient leaves [{lo:.6g}, {hi:.6g}] at {int(bad.sum())} nodes "
                f"(range {np.nanmin(vals):.6g}..{np.nanmax(vals):.6g})")
    a_arr[~unk] = 1.0
    homogeneous = rhs is None
    r = np.zeros(g.shape) if homogeneous else np.array(rhs, dtype=float)
    r[~unk] = 0.0
    v = _start(problem, initial)
    a2 = np.ones(g.shape)
    ih1, ih2 = 1.0 / g.h1**2, 1.0 / g.h2**2
    omega = _omega(g, unk, a_arr)
    sweeps = 0
    res0 = res = _kernels.linear_residual(v, a_arr, a2, r, unk, ih1, ih2)
    floor = rounding_floor(problem, v, a_arr)
    if floor > tol:
        log.debug("SOR tolerance %.3e raised to rounding floor %.3e", tol, floor)
        tol = floor
    while not res <= tol:
        if sweeps >= max_iter:
            raise ConvergenceError(
                f"SOR stopped after {sweeps} sweeps with residual {res:.3e} > {tol:.3e}")
        if not res <= DIVERGENCE_FACTOR * res0:
            # over-relaxation is only safe for symmetric problems; rough
            # coefficients can make it diverge, so restart closer to Gauss-Seidel
            if omega <= 1.0:
                raise ConvergenceError(f"SOR diverged (residual {res:.3e})")
            omega = max(1.0, 0.5 * (omega + 1.0))
            log.info("SOR diverging, restarting with omega=%.4f", omega)
            v = _start(problem, initial)
        _kernels.sor_sweeps(v, a_arr, a2, r, unk, ih1, ih2, omega, CHECK_EVERY)
        sweeps += CHECK_EVERY
        res = _kernels.linear_residual(v, a_arr, a2, r, unk, ih1, ih2)
    if report is not None:
        report.inner_iterations.append(sweeps)
    if homogeneous:
        _check_max_principle(problem, v, a_arr, tol)
    out = np.where(problem.mask, v, np.nan)
    return GridFunction(g, out, problem.mask)


def _check_max_principle(problem: EllipticProblem, v: np.ndarray, a: np.ndarray, tol: float):
    unk, bnd = problem.unknown, problem.boundary_nodes
    g = problem.grid
    # a residual of size tol moves the solution by at most tol * diam^2 / (2 min coefficient)
    diam2 = (g.x_max - g.x_min) ** 2 + (g.y_max - g.y_min) ** 2
    slack = tol * diam2 / (2.0 * min(1.0, float(a[unk].min()))) + 1e-12 * max(1.0, np.abs(v[bnd]).max())
    hi, lo = v[bnd].max(), v[bnd].min()
    if v[unk].max() > hi + slack or v[unk].min() < lo - slack:
        raise ConvergenceError(
            f"maximum principle violated: interior range [{v[unk].min():.6g}, {v[unk].max():.6g}] "
            f"outside boundary range [{lo:.6g}, {hi:.6g}]")


def quasilinear_residual(v: GridFunction, f: Callable) -> GridFunction:
    """d11 v * f(d1 v, y2) + d22 v at interior valid nodes; NaN elsewhere."""
    g = v.grid
    inner = interior_mask(g, v.valid)
    H = fd_hessian(v)
    d1, _ = fd_gradient(v)
    _, Y2 = g.mesh()
    out = np.full(g.shape, np.nan)
    with np.errstate(all="ignore"):
        coeff = np.asarray(f(d1.values[inner], Y2[inner]), dtype=float) * np.ones(inner.sum())
    out[inner] = H.d11[inner] * coeff + H.d22[inner]
    return GridFunction(g, out, inner)


def _stencil_residual(problem: EllipticProblem, v: np.ndarray, clamp: bool):
    a, nclamp = problem.coefficient_field(v, clamp=clamp)
    g = problem.grid
    res = _kernels.linear_residual(v, a, np.ones(g.shape), np.zeros(g.shape), problem.unknown,
                                   1.0 / g.h1**2, 1.0 / g.h2**2)
    return res, a, nclamp


def solve_quasilinear(problem: EllipticProblem, tol: float = DEFAULT_TOL,
                      max_outer: int = DEFAULT_MAX_OUTER, theta: float = DEFAULT_THETA,
                      initial: Optional[np.ndarray] = None, validate: bool = True):
    """Damped Picard iteration; returns ``(v, SolveReport)``.

    The first iterate is ``initial`` or the solution with a = 1. Each outer
    step freezes a = f(d1 v, y2), solves the linear problem warm-started
    from v and blends with weight ``theta``. Converged when the quasilinear
    stencil residual over the unknowns is <= ``tol``. With ``validate`` the
    converged iterate must keep the unclamped coefficient within bounds.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("damping theta must lie in (0, 1]")
    t0 = time.perf_counter()
    report = SolveReport(damping=theta)
    inner_tol = 0.1 * tol
    if initial is None:
        v = linear_elliptic_solve(np.ones(problem.grid.shape), problem, inner_tol,
                                  report=report, check_bounds=False).values.copy()
        v[~problem.mask] = 0.0
    else:
        v = _start(problem, initial)

    res, a, nclamp = _stencil_residual(problem, v, clamp=True)
    report.residual_history.append(res)
    floor = QUASI_FLOOR_FACTOR * rounding_floor(problem, v, a)
    if floor > tol:
        log.debug("Picard tolerance %.3e raised to rounding floor %.3e", tol, floor)
        tol = floor
        inner_tol = 0.1 * tol
    while res > tol:
        k = report.outer_iterations
        if k >= max_outer:
            report.wall_time = time.perf_counter() - t0
            raise ConvergenceError(
                f"Picard iteration stopped after {k} steps with residual {res:.3e} > {tol:.3e}")
        hist = report.residual_history
        if len(hist) > STALL_WINDOW and hist[-1] > STALL_FACTOR * hist[-1 - STALL_WINDOW]:
            report.wall_time = time.perf_counter() - t0
            raise StallError(
                f"residual fell by less than 1% over {STALL_WINDOW} Picard steps "
                f"({hist[-1 - STALL_WINDOW]:.3e} -> {hist[-1]:.3e})")
        if nclamp:
            report.clamped += nclamp
            log.info("coefficient clamped to [1/C0, C0] at %d nodes (outer step %d)", nclamp, k)
        new = linear_elliptic_solve(a, problem, inner_tol, initial=v, report=report).values
        unk = problem.unknown
        v[unk] = theta * new[unk] + (1.0 - theta) * v[unk]
        report.outer_iterations += 1
        res, a, nclamp = _stencil_residual(problem, v, clamp=True)
        report.residual_history.append(res)

    _, out_of_band = problem.coefficient_field(v, clamp=False)
    report.out_of_band = out_of_band
    if validate and out_of_band:
        raise CoefficientBoundsError(
            f"converged iterate drives the coefficient outside [1/C0, C0] at {out_of_band} nodes")
    report.final_residual = res
    report.converged = True
    report.wall_time = time.perf_counter() - t0
    out = np.where(problem.mask, v, np.nan)
    return GridFunction(problem.grid, out, problem.mask), report
