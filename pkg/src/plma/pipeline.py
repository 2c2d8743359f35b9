"""Two Monge-Ampere solvers on the disc and their cross-validation.

Both work on the square lattice around B_R. Nodes whose four neighbours
lie in the closed disc are unknowns; every other node carries the Dirichlet
data ``g`` (the data callable is evaluated on the whole exterior ring, so
difference stencils at the unknowns never leave the lattice).

The reference path iterates Poisson solves

    lap u_{n+1} = sqrt((u11 - u22)^2 + 4 u12^2 + 4 f),

whose fixed points satisfy the discrete det D^2 u = f exactly. The transform
path maps the current iterate to y-space, solves the quasilinear equation
there, maps back and blends.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .elliptic import EllipticProblem, linear_elliptic_solve, solve_quasilinear, unknown_nodes
from .errors import ConvergenceError, GridError, MaskCollapseError, NonConvexError
from .grid import (
    Grid,
    GridFunction,
    convexity_check,
    disc_mask,
    hessian_arrays,
    interior_mask,
    interpolate_array,
    ma_residual,
)
from .plegendre import inverse_partial_legendre, partial_legendre, points_in_polygon

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_DAMPING = 0.5
MIN_DAMPING = 1.0 / 64
LAMBDA_FLOOR = 1e-3
# fewer y-unknowns than this means P(B_R) has degenerated
MIN_Y_UNKNOWNS = 16
ANDERSON_DEPTH = 10
PLT_ANDERSON_DEPTH = 5
# smallest lattice the transform path is started from when nesting
MIN_NESTED_N = 33


@dataclass(frozen=True, eq=False)
class MAProblem:
    """det D^2 u = f in B_R, u = g outside.

    ``f(x1, x2)`` by default; with ``general`` it is ``f(x1, x2, u, p1, p2)``
    and is probed with the current iterate. ``g(x1, x2)`` is vectorised.
    """

    R: float
    f: Callable
    g: Callable
    C0: float
    general: bool = False

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not self.C0 >= 1.0:
            raise ValueError("C0 must be >= 1")

    def rhs(self, x1, x2, u=None, p1=None, p2=None) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        if self.general:
            out = self.f(x1, x2, u, p1, p2)
        else:
            out = self.f(x1, x2)
        return np.asarray(out, dtype=float) * np.ones(x1.shape)

    def grid(self, n: int) -> Grid:
        if n < 5 or n % 2 == 0:
            raise GridError(f"grid size must be odd and >= 5, got {n}")
        return Grid.square(self.R, n)


def _layout(problem: MAProblem, grid: Grid):
    disc = disc_mask(grid, problem.R)
    unk = unknown_nodes(disc)
    X1, X2 = grid.mesh()
    base = np.asarray(problem.g(X1, X2), dtype=float) * np.ones(grid.shape)
    if not np.isfinite(base[~unk]).all():
        raise GridError("boundary data g is not finite on the exterior ring")
    return disc, unk, base


def _rhs_field(problem: MAProblem, grid: Grid, u: np.ndarray) -> np.ndarray:
    X1, X2 = grid.mesh()
    if problem.general:
        d1, d2 = np.gradient(u, grid.h1, grid.h2, edge_order=2)
        return problem.rhs(X1, X2, u, d1, d2)
    return problem.rhs(X1, X2)


def _ma_sup_residual(problem: MAProblem, grid: Grid, u: np.ndarray, unk: np.ndarray) -> float:
    d11, d12, d22 = hessian_arrays(u, grid.h1, grid.h2)
    f = _rhs_field(problem, grid, u)
    return float(np.max(np.abs(d11 * d22 - d12 * d12 - f)[unk]))


@dataclass
class ReferenceReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_record(self) -> dict:
        return {"iterations": self.iterations,
                "residual_history": [float(r) for r in self.residual_history],
                "wall_time": self.wall_time}


def _anderson_mix(xs: list, rs: list) -> np.ndarray:
    """Anderson (type II) update from the stored iterates and fixed-point residuals."""
    x, r = xs[-1], rs[-1]
    if len(xs) < 2:
        return x + r
    dX = np.diff(np.asarray(xs), axis=0).T
    dR = np.diff(np.asarray(rs), axis=0).T
    gamma = np.linalg.lstsq(dR, r, rcond=None)[0]
    return x + r - (dX + dR) @ gamma


def solve_ma_reference(problem: MAProblem, grid: Grid, tol: float = DEFAULT_TOL,
                       max_iter: int = 500, report: Optional[ReferenceReport] = None,
                       depth: int = ANDERSON_DEPTH) -> GridFunction:
    """Fixed-point Poisson iteration; converged when the MA residual at the unknowns is <= tol.

    Each step solves Laplace(v) = sqrt((u11 - u22)^2 + 4 u12^2 + 4 f) with the
    boundary data. The plain iteration contracts slowly for anisotropic
    Hessians, so steps are Anderson-mixed over the last ``depth`` iterates
    (``depth=0`` gives the plain iteration). The result is defined on the
    whole lattice (g outside the disc) with the closed disc as its mask.
    """
    t0 = time.perf_counter()
    rep = report if report is not None else ReferenceReport()
    disc, unk, base = _layout(problem, grid)
    poisson = EllipticProblem(grid, disc, lambda p, y2: np.ones_like(p), 1.0, base)
    ones = np.ones(grid.shape)
    # the determinant amplifies Poisson errors by ~|D^2u|/h^2
    inner = 1e-2 * tol

    def step(u):
        d11, d12, d22 = hessian_arrays(u, grid.h1, grid.h2)
        f = _rhs_field(problem, grid, u)
        s = np.sqrt((d11 - d22) ** 2 + 4.0 * d12 * d12 + 4.0 * np.maximum(f, 0.0))
        return linear_elliptic_solve(ones, poisson, inner, rhs=s, initial=u).values[unk]

    s0 = 2.0 * np.sqrt(np.maximum(_rhs_field(problem, grid, base), 0.0))
    u = base.copy()
    u[unk] = linear_elliptic_solve(ones, poisson, inner, rhs=s0).values[unk]
    xs, rs = [], []
    while True:
        rep.iterations += 1
        res = _ma_sup_residual(problem, grid, u, unk)
        rep.residual_history.append(res)
        if res <= tol:
            break
        if rep.iterations >= max_iter:
            rep.wall_time = time.perf_counter() - t0
            raise ConvergenceError(
                f"reference solver stopped after {max_iter} iterations with MA residual {res:.3e}")
        x = u[unk]
        xs.append(x)
        rs.append(step(u) - x)
        del xs[:-(depth + 1)], rs[:-(depth + 1)]
        u = base.copy()
        u[unk] = _anderson_mix(xs, rs) if depth > 0 else xs[-1] + rs[-1]
    rep.wall_time = time.perf_counter() - t0
    out = GridFunction(grid, u, disc)
    check = convexity_check(out)
    if not check:
        raise NonConvexError(
            f"reference solution is not convex: lambda_min {check.lambda_min:.3e} at node {check.node}")
    return out


def _poisson_start(problem: MAProblem, grid: Grid, rhs: np.ndarray, tol: float) -> np.ndarray:
    disc, unk, base = _layout(problem, grid)
    poisson = EllipticProblem(grid, disc, lambda p, y2: np.ones_like(p), 1.0, base)
    v = linear_elliptic_solve(np.ones(grid.shape), poisson, tol, rhs=rhs).values
    out = base.copy()
    out[unk] = v[unk]
    return out


def initial_poisson(problem: MAProblem, grid: Grid, tol: float = 1e-10) -> np.ndarray:
    """Solution of Laplace(u) = 2 sqrt(f) with the boundary data.

    By the AM-GM inequality this is the Laplacian any solution of
    det D^2 u = f with equal eigenvalues would have.
    """
    _, _, base = _layout(problem, grid)
    s = 2.0 * np.sqrt(np.maximum(_rhs_field(problem, grid, base), 0.0))
    return _poisson_start(problem, grid, s, tol)


def initial_iterate(problem: MAProblem, grid: Grid, tol: float = 1e-10) -> np.ndarray:
    """Starting iterate that matches the boundary data.

    Two candidates: the fitted quadratic of ``initial_quadratic`` corrected
    by a harmonic function to match g (exact when the solution is
    quadratic), and ``initial_poisson``. Candidates passing the convexity
    check are preferred, then the smaller MA residual wins. Both can carry
    a kink of size O(h) against the data nodes next to the circle, which
    the check sees once h is small; the pipeline only requires accepted
    iterates to be convex.
    """
    disc, unk, _ = _layout(problem, grid)
    q = initial_quadratic(problem)
    X1, X2 = grid.mesh()
    # second differences with unit step are exact on quadratics
    lap = float(np.mean(q(X1 + 1.0, X2) + q(X1 - 1.0, X2) + q(X1, X2 + 1.0) + q(X1, X2 - 1.0)
                        - 4.0 * q(X1, X2)))
    ranked = []
    for cand in (_poisson_start(problem, grid, np.full(grid.shape, lap), tol),
                 initial_poisson(problem, grid, tol)):
        convex = bool(convexity_check(GridFunction(grid, cand, disc)))
        ranked.append((not convex, _ma_sup_residual(problem, grid, cand, unk), len(ranked), cand))
    ranked.sort(key=lambda t: t[:3])
    if ranked[0][0]:
        log.debug("no convex starting candidate; using the one with MA residual %.3e", ranked[0][1])
    return ranked[0][3]


def initial_quadratic(problem: MAProblem, n_samples: int = 720) -> Callable:
    """Uniformly convex quadratic fitted to the boundary data.

    On the circle x1^2 + x2^2 = R^2 the trace part of the Hessian is not
    identifiable from boundary values, so the traceless part, the linear
    part and the constant are fitted by least squares and the trace is then
    chosen to make det equal the mean of f over the disc, with the smallest
    eigenvalue floored at 1e-3.
    """
    R = problem.R
    theta = 2.0 * np.pi * np.arange(n_samples) / n_samples
    x1, x2 = R * np.cos(theta), R * np.sin(theta)
    gv = np.asarray(problem.g(x1, x2), dtype=float) * np.ones(n_samples)
    # q = a/2 |x|^2 + d/2 (x1^2 - x2^2) + e x1 x2 + b1 x1 + b2 x2 + c
    A = np.column_stack([0.5 * (x1 * x1 - x2 * x2), x1 * x2, x1, x2, np.ones(n_samples)])
    (d, e, b1, b2, c0), *_ = np.linalg.lstsq(A, gv, rcond=None)
    r = np.sqrt(np.random.default_rng(0).uniform(0, 1, 4096)) * R
    phi = np.random.default_rng(1).uniform(0, 2 * np.pi, 4096)
    if problem.general:
        fm = float(np.mean(problem.rhs(r * np.cos(phi), r * np.sin(phi), 0.0, 0.0, 0.0)))
    else:
        fm = float(np.mean(problem.rhs(r * np.cos(phi), r * np.sin(phi))))
    rad = math.hypot(d, e)
    a = max(math.sqrt(max(fm, 0.0) + rad * rad), rad + LAMBDA_FLOOR)
    c = c0 - 0.5 * a * R * R

    def q(y1, y2):
        return (0.5 * a * (y1 * y1 + y2 * y2) + 0.5 * d * (y1 * y1 - y2 * y2)
                + e * y1 * y2 + b1 * y1 + b2 * y2 + c)

    return q


@dataclass
class PipelineState:
    u: Optional[GridFunction] = None
    transform: object = None
    outer_iterations: int = 0
    increment_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    damping_history: list = field(default_factory=list)
    convexity_log: list = field(default_factory=list)
    inner_outer_iterations: list = field(default_factory=list)
    coarse_sizes: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False

    def to_record(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "increment_history": [float(x) for x in self.increment_history],
            "ma_residual_history": [float(x) for x in self.residual_history],
            "damping_history": list(self.damping_history),
            "convexity_log": [bool(c) for c in self.convexity_log],
            "quasilinear_iterations": list(self.inner_outer_iterations),
            "coarse_sizes": list(self.coarse_sizes),
            "wall_time": self.wall_time,
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class BoundaryTransfer:
    """Second-order jet of u at samples of the circle and the matching jet of u*.

    ``y`` are the images P(x^); ``value``, ``grad`` and ``hess`` describe
    u* at those images.
    """

    x: np.ndarray
    y: np.ndarray
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    def taylor(self, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
        """Expand u* about the nearest image point."""
        _, k = cKDTree(self.y).query(np.column_stack([q1, q2]))
        s1, s2 = q1 - self.y[k, 0], q2 - self.y[k, 1]
        H = self.hess[k]
        return (self.value[k] + self.grad[k, 0] * s1 + self.grad[k, 1] * s2
                + 0.5 * (H[:, 0] * s1 * s1 + 2.0 * H[:, 1] * s1 * s2 + H[:, 2] * s2 * s2))


def _spectral(v: np.ndarray, modes: int, order: int = 0) -> np.ndarray:
    """Truncate a periodic sample to ``modes`` Fourier modes and differentiate ``order`` times."""
    c = np.fft.rfft(v)
    k = np.arange(c.size)
    c[k > modes] = 0.0
    return np.fft.irfft(c * (1j * k) ** order, n=v.size)


def boundary_transfer(problem: MAProblem, u: GridFunction, n_samples: int) -> BoundaryTransfer:
    """Jets of u and u* on the circle from the data and the iterate's normal derivative.

    Along the circle g and its tangential derivatives are known exactly;
    only the normal derivative N is read from the iterate, one-sidedly from
    inside. The normal-tangential parts of D^2 u follow by differentiating
    along the circle and u_nn from det D^2 u = f.
    """
    R = problem.R
    g = u.grid
    theta = 2.0 * np.pi * np.arange(n_samples) / n_samples
    c, s = np.cos(theta), np.sin(theta)
    x1, x2 = R * c, R * s
    G = np.asarray(problem.g(x1, x2), dtype=float) * np.ones(n_samples)
    h = min(g.h1, g.h2)
    G1 = _spectral(G, n_samples // 2, 1)
    G2 = _spectral(G, n_samples // 2, 2)
    # the iterate resolves about one mode per two grid spacings of arc; finer
    # modes of N are interpolation noise and would be amplified by d/dtheta
    modes = max(4, int(R / (2.0 * h)))
    # third-order one-sided difference along the inward normal
    inner = [interpolate_array(g, u.values, (R - k * h) * c, (R - k * h) * s) for k in (1, 2, 3)]
    N = (11.0 * G - 18.0 * inner[0] + 9.0 * inner[1] - 2.0 * inner[2]) / (6.0 * h)
    N = _spectral(N, modes)
    N1 = _spectral(N, modes, 1)
    u1 = c * N - s * G1 / R
    u2 = s * N + c * G1 / R
    if problem.general:
        f = problem.rhs(x1, x2, G, u1, u2)
    else:
        f = problem.rhs(x1, x2)
    utt = np.maximum((G2 + R * N) / (R * R), LAMBDA_FLOOR)
    unt = (N1 - G1 / R) / R
    unn = (f + unt * unt) / utt
    u11 = np.maximum(c * c * unn - 2.0 * c * s * unt + s * s * utt, LAMBDA_FLOOR)
    u12 = c * s * (unn - utt) + (c * c - s * s) * unt
    y = np.column_stack([u1, x2])
    value = x1 * u1 - G
    grad = np.column_stack([x1, -u2])
    hess = np.column_stack([1.0 / u11, -u12 / u11, -f / u11])
    return BoundaryTransfer(np.column_stack([x1, x2]), y, value, grad, hess)


def _n_boundary(problem: MAProblem, grid: Grid) -> int:
    # four samples per grid spacing of circumference
    return max(720, 4 * math.ceil(2.0 * math.pi * problem.R / min(grid.h1, grid.h2)))


def _coefficient(problem: MAProblem, u: GridFunction) -> Callable:
    if not problem.general:
        return lambda p, y2: problem.rhs(p, y2)
    g = u.grid
    d1, d2 = np.gradient(u.values, g.h1, g.h2, edge_order=2)

    def coeff(p, y2):
        p = np.clip(p, g.x_min, g.x_max)
        uu = interpolate_array(g, u.values, p, y2)
        return problem.rhs(p, y2, uu, interpolate_array(g, d1, p, y2), interpolate_array(g, d2, p, y2))

    return coeff


def _y_problem(problem: MAProblem, u: GridFunction, yg: Grid, bt: BoundaryTransfer):
    Y1, Y2 = yg.mesh()
    ymask = points_in_polygon(bt.y, Y1, Y2)
    unk = unknown_nodes(ymask)
    if unk.sum() < MIN_Y_UNKNOWNS:
        raise MaskCollapseError(
            f"image region P(B_R) has only {int(unk.sum())} interior y-nodes; "
            "the iterate is close to degenerate convexity")
    ring = ymask & ~unk
    bvals = np.full(yg.shape, np.nan)
    bvals[ring] = bt.taylor(Y1[ring], Y2[ring])
    try:
        return EllipticProblem(yg, ymask, _coefficient(problem, u), problem.C0, bvals)
    except GridError as exc:
        raise MaskCollapseError(f"image region P(B_R) is unusable: {exc}") from exc


def _plt_step(problem: MAProblem, grid: Grid, u_arr: np.ndarray, n_b: int, inner_tol: float):
    """One undamped transform-solve-invert step; returns the back-transformed array."""
    full = GridFunction(grid, u_arr)
    bt = boundary_transfer(problem, full, n_b)
    T = partial_legendre(full, problem.R, check_convex=False, n_boundary=n_b,
                         y1_range=(float(bt.y[:, 0].min()), float(bt.y[:, 0].max())))
    yp = _y_problem(problem, full, T.y_grid, bt)
    v, rep = solve_quasilinear(yp, tol=inner_tol, initial=T.ustar.values, validate=False)
    # off the image region u* continues with the boundary expansion, so the
    # back transform sees rows without a jump at the mask edge
    Y1, Y2 = T.y_grid.mesh()
    off = ~yp.mask
    vfull = v.values.copy()
    vfull[off] = bt.taylor(Y1[off], Y2[off])
    back = inverse_partial_legendre(GridFunction(T.y_grid, vfull), grid)
    return back, (T, yp, v, rep)


def _coarse_start(problem: MAProblem, grid: Grid, tol: float, max_outer: int, damping: float,
                  inner_tol: Optional[float], depth: int):
    """Converged transform-path solution on the half-resolution lattice, or None."""
    m = (grid.n1 + 1) // 2
    if grid.n1 != grid.n2 or m < MIN_NESTED_N or m % 2 == 0 or grid != problem.grid(grid.n1):
        return None
    coarse = problem.grid(m)
    try:
        u, state = solve_ma_plt(problem, coarse, tol, max_outer, damping, None, inner_tol, depth)
    except (ConvergenceError, NonConvexError, MaskCollapseError) as exc:
        log.info("no coarse start on %d x %d: %s", m, m, exc)
        return None
    return u, state


def solve_ma_plt(problem: MAProblem, grid: Grid, tol: float = DEFAULT_TOL,
                 max_outer: int = 200, damping: float = DEFAULT_DAMPING,
                 initial: Optional[Callable] = None, inner_tol: Optional[float] = None,
                 depth: int = PLT_ANDERSON_DEPTH, nested: bool = True):
    """Transform pipeline; returns ``(u, PipelineState)``.

    One outer step transforms the current iterate, solves the quasilinear
    equation on the image of the disc with Dirichlet data transferred from
    the circle and transforms back. The damped step (weight ``damping`` in
    x-space) is Anderson-mixed over the last ``depth`` steps; if the mixed
    iterate fails the convexity check the plain damped step is used, with
    the damping halved until it passes. Converged when the sup-norm update
    over the unknowns is <= ``tol`` (the MA residual of this path has an
    O(h^2) floor, since it is discretised in y-space).

    Without ``initial``, the start is the converged solution on the lattice
    of half the resolution, interpolated (``nested``, applied recursively
    down to 33 x 33). On fine lattices the step map has a weakly unstable
    boundary mode, and only a start this close lies in the basin of the
    mixed iteration. ``initial_iterate`` is the start otherwise.

    On non-convergence the raised ConvergenceError carries the state,
    including the last accepted iterate, as ``exc.state``.
    """
    t0 = time.perf_counter()
    disc, unk, base = _layout(problem, grid)
    X1, X2 = grid.mesh()
    u_arr = base.copy()
    state = PipelineState()
    coarse = None
    if initial is None and nested:
        coarse = _coarse_start(problem, grid, tol, max_outer, damping, inner_tol, depth)
    if coarse is not None:
        cu, cstate = coarse
        u_arr[unk] = interpolate_array(cu.grid, cu.values, X1[unk], X2[unk])
        state.coarse_sizes = cstate.coarse_sizes + [cu.grid.n1]
    elif initial is None:
        u_arr[unk] = initial_iterate(problem, grid)[unk]
    else:
        u_arr[unk] = (np.asarray(initial(X1, X2), dtype=float) * np.ones(grid.shape))[unk]
    if inner_tol is None:
        inner_tol = 0.1 * tol
    n_b = _n_boundary(problem, grid)
    xs, rs = [], []
    while True:
        if state.outer_iterations >= max_outer:
            state.u = GridFunction(grid, u_arr, disc)
            state.wall_time = time.perf_counter() - t0
            exc = ConvergenceError(
                f"transform pipeline stopped after {max_outer} steps; last update "
                f"{state.increment_history[-1]:.3e} > {tol:.3e}")
            exc.state = state
            raise exc
        back, last = _plt_step(problem, grid, u_arr, n_b, inner_tol)
        state.inner_outer_iterations.append(last[3].outer_iterations)
        if not np.isfinite(back[unk]).all():
            raise ConvergenceError("inverse transform left unknown nodes undefined")
        x = u_arr[unk]
        xs.append(x)
        rs.append(damping * (back[unk] - x))
        del xs[:-(depth + 1)], rs[:-(depth + 1)]
        cand = u_arr.copy()
        theta = damping
        ok = None
        if depth > 0 and len(xs) > 1:
            cand[unk] = _anderson_mix(xs, rs)
            ok = convexity_check(GridFunction(grid, cand, disc))
            if not ok:
                xs, rs = xs[-1:], rs[-1:]
        while not ok:
            cand[unk] = x + theta * (back[unk] - x)
            ok = convexity_check(GridFunction(grid, cand, disc))
            if ok or theta <= MIN_DAMPING:
                break
            theta *= 0.5
        state.convexity_log.append(bool(ok))
        if not ok:
            raise NonConvexError(
                f"no damping >= {MIN_DAMPING} keeps the iterate convex "
                f"(lambda_min {ok.lambda_min:.3e} at node {ok.node})")
        incr = float(np.max(np.abs(cand[unk] - x)))
        u_arr = cand
        state.outer_iterations += 1
        state.damping_history.append(theta)
        state.increment_history.append(incr)
        state.residual_history.append(_ma_sup_residual(problem, grid, u_arr, unk))
        state.transform = last[0]
        log.debug("plt step %d: update %.3e, residual %.3e", state.outer_iterations, incr,
                  state.residual_history[-1])
        if incr <= tol:
            break
    state.u = GridFunction(grid, u_arr, disc)
    state.converged = True
    state.wall_time = time.perf_counter() - t0
    return state.u, state


@dataclass
class CrossValidation:
    n: int
    disagreement: float
    plt_residual: float
    reference_residual: float
    plt_time: float
    reference_time: float
    plt_state: PipelineState
    reference_report: ReferenceReport

    def to_record(self) -> dict:
        return {"n": self.n, "disagreement": self.disagreement,
                "plt_ma_residual": self.plt_residual,
                "reference_ma_residual": self.reference_residual,
                "plt_time": self.plt_time, "reference_time": self.reference_time,
                "plt": self.plt_state.to_record(), "reference": self.reference_report.to_record()}


def disagreement(a: GridFunction, b: GridFunction) -> float:
    """sup |a - b| over the common interior."""
    if a.grid != b.grid:
        raise GridError("solutions live on different grids")
    region = interior_mask(a.grid, a.valid & b.valid)
    return float(np.max(np.abs(a.values - b.values)[region]))


def _residual_sup(problem: MAProblem, u: GridFunction) -> float:
    grid = u.grid
    return _ma_sup_residual(problem, grid, u.values, unknown_nodes(u.valid))


def cross_validate(problem: MAProblem, grid: Grid, tol: float = DEFAULT_TOL) -> CrossValidation:
    rref = ReferenceReport()
    ref = solve_ma_reference(problem, grid, tol, report=rref)
    plt, state = solve_ma_plt(problem, grid, tol)
    return CrossValidation(grid.n1, disagreement(plt, ref), _residual_sup(problem, plt),
                           _residual_sup(problem, ref), state.wall_time, rref.wall_time,
                           state, rref)


def ma_residual_field(problem: MAProblem, u: GridFunction) -> GridFunction:
    """Pointwise det D^2u - f on the interior of ``u``'s valid region."""
    g = u.grid
    return ma_residual(u, GridFunction(g, _rhs_field(problem, g, u.values)))
