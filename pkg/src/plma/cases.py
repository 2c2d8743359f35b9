"""Analytic Monge-Ampere cases with closed-form derivatives.

Every case is probed at load: det D^2u = f on random points of the disc,
C0^-1 <= f <= C0 there, and u(0) = 0, Du(0) = 0.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import CaseValidationError
from .grid import Grid, GridFunction, disc_mask, sample

N_PROBES = 10_000
PROBE_TOL = 1e-10
EPSILONS = (1.0, 0.5, 0.25, 0.1)


def _scalar(v) -> float:
    return float(np.asarray(v, dtype=float).ravel()[0])


@dataclass(frozen=True, eq=False)
class CaseSpec:
    name: str
    u: Callable
    du: Callable
    d2u: Callable
    f: Callable
    R: float = 1.0
    C0: float = 1.0
    ustar: Optional[Callable] = None
    alpha: Optional[float] = None
    f_holder: Optional[float] = None
    family: str = ""
    eps: Optional[float] = None

    def grid(self, n: int) -> Grid:
        return Grid.square(self.R, n)

    def sample(self, n: int) -> GridFunction:
        """u on the n x n lattice of [-R, R]^2, masked to the closed disc."""
        g = self.grid(n)
        return sample(self.u, g).with_mask(disc_mask(g, self.R))

    def sample_f(self, n: int) -> GridFunction:
        return sample(self.f, self.grid(n))

    def hessian0(self) -> np.ndarray:
        a, b, c = (_scalar(v) for v in self.d2u(np.zeros(1), np.zeros(1)))
        return np.array([[a, b], [b, c]])

    def problem(self):
        from .pipeline import MAProblem
        return MAProblem(self.R, self.f, self.u, self.C0)

    def with_f_scale(self, factor: float) -> "CaseSpec":
        """Same u with f multiplied by ``factor``; inconsistent unless factor is 1."""
        f = self.f
        return replace(self, name=f"{self.name}*f{factor:g}", f=lambda a, b: factor * f(a, b))

    def rescaled(self, lam: float) -> "CaseSpec":
        """u(lam x)/lam^2 on B_{R/lam}, with f(lam x); again an exact solution."""
        u, du, d2u, f = self.u, self.du, self.d2u, self.f

        def du_l(a, b):
            g1, g2 = du(lam * a, lam * b)
            return g1 / lam, g2 / lam

        return replace(
            self, name=f"{self.name}@{lam:g}", R=self.R / lam,
            u=lambda a, b: u(lam * a, lam * b) / (lam * lam),
            du=du_l, d2u=lambda a, b: d2u(lam * a, lam * b),
            f=lambda a, b: f(lam * a, lam * b), ustar=None)


def validate(case: CaseSpec, n_probes: int = N_PROBES, seed: int = 0) -> float:
    """Probe det D^2u = f on the disc; returns the worst scaled mismatch.

    Raises CaseValidationError on a mismatch above PROBE_TOL, on f leaving
    [1/C0, C0], or on a nonzero value or gradient at the origin.
    """
    rng = np.random.default_rng(seed)
    r = case.R * np.sqrt(rng.uniform(0.0, 1.0, n_probes))
    phi = rng.uniform(0.0, 2.0 * np.pi, n_probes)
    x1, x2 = r * np.cos(phi), r * np.sin(phi)
    u11, u12, u22 = (np.asarray(v, dtype=float) * np.ones(n_probes) for v in case.d2u(x1, x2))
    fv = np.asarray(case.f(x1, x2), dtype=float) * np.ones(n_probes)
    scale = np.maximum(1.0, np.abs(fv))
    err = np.abs(u11 * u22 - u12 * u12 - fv) / scale
    k = int(np.argmax(err))
    if not err[k] <= PROBE_TOL:
        raise CaseValidationError(
            f"case {case.name}: det D^2u - f = {u11[k] * u22[k] - u12[k] ** 2 - fv[k]:.3e} "
            f"at ({x1[k]:.6f}, {x2[k]:.6f})")
    lo, hi = float(fv.min()), float(fv.max())
    if lo < (1.0 / case.C0) * (1.0 - 1e-12) or hi > case.C0 * (1.0 + 1e-12):
        raise CaseValidationError(
            f"case {case.name}: f ranges over [{lo:.6g}, {hi:.6g}], outside [1/C0, C0] with C0 = {case.C0:.6g}")
    z = np.zeros(1)
    u0 = _scalar(case.u(z, z))
    g0 = np.hypot(*(_scalar(v) for v in case.du(z, z)))
    if abs(u0) > PROBE_TOL or g0 > PROBE_TOL:
        raise CaseValidationError(f"case {case.name}: u(0) = {u0:.3e}, |Du(0)| = {g0:.3e}; expected 0")
    return float(err[k])


def eps_case(eps: float, R: float = 1.0) -> CaseSpec:
    """u = eps x1^2/2 + x2^2/(2 eps), det D^2u = 1."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    e = float(eps)
    return CaseSpec(
        name=f"eps:{e:g}",
        u=lambda a, b: 0.5 * e * a * a + 0.5 * b * b / e,
        du=lambda a, b: (e * a, b / e),
        d2u=lambda a, b: (e + 0.0 * a, 0.0 * a, 1.0 / e + 0.0 * a),
        f=lambda a, b: np.ones_like(np.asarray(a, dtype=float)),
        R=R, C0=1.0,
        ustar=lambda y1, y2: 0.5 * (y1 * y1 - y2 * y2) / e,
        alpha=1.0, f_holder=0.0, family="eps", eps=e)


def radial_case(R: float = 1.0) -> CaseSpec:
    return CaseSpec(
        name="radial",
        u=lambda a, b: 0.5 * (a * a + b * b),
        du=lambda a, b: (a, b),
        d2u=lambda a, b: (1.0 + 0.0 * a, 0.0 * a, 1.0 + 0.0 * a),
        f=lambda a, b: np.ones_like(np.asarray(a, dtype=float)),
        R=R, C0=1.0,
        ustar=lambda y1, y2: 0.5 * (y1 * y1 - y2 * y2),
        alpha=1.0, f_holder=0.0, family="radial")


def quad_case(R: float = 1.0) -> CaseSpec:
    """u = x^T A x / 2 with A = [[1, 0.5], [0.5, 2]]; f = det A = 1.75."""
    return CaseSpec(
        name="quad",
        u=lambda a, b: 0.5 * a * a + 0.5 * a * b + b * b,
        du=lambda a, b: (a + 0.5 * b, 0.5 * a + 2.0 * b),
        d2u=lambda a, b: (1.0 + 0.0 * a, 0.5 + 0.0 * a, 2.0 + 0.0 * a),
        f=lambda a, b: np.full(np.shape(np.asarray(a, dtype=float)), 1.75),
        R=R, C0=1.75,
        ustar=lambda y1, y2: 0.5 * (y1 - 0.5 * y2) ** 2 - y2 * y2,
        alpha=1.0, f_holder=0.0, family="quad")


def exp_case(R: float = 1.0) -> CaseSpec:
    """u = e^x1 - 1 - x1 + x2^2/2, f = e^x1; C0 = e^R bounds f on B_R."""
    return CaseSpec(
        name="exp",
        u=lambda a, b: np.expm1(a) - a + 0.5 * b * b,
        du=lambda a, b: (np.expm1(a), b),
        d2u=lambda a, b: (np.exp(a), 0.0 * a, 1.0 + 0.0 * a),
        f=lambda a, b: np.exp(a) + 0.0 * b,
        R=R, C0=math.exp(R),
        ustar=lambda y1, y2: (1.0 + y1) * np.log1p(y1) - y1 - 0.5 * y2 * y2,
        alpha=1.0, f_holder=math.exp(R), family="exp")


def _builders():
    return [lambda e=e: eps_case(e) for e in EPSILONS] + [radial_case, quad_case, exp_case]


def registry(check: bool = True, seed: int = 0) -> list[CaseSpec]:
    """All built-in cases, validated at load unless ``check`` is False."""
    cases = [b() for b in _builders()]
    if check:
        for c in cases:
            validate(c, seed=seed)
    return cases


def case_names() -> list[str]:
    return [c.name for c in registry(check=False)]


_EPS_NAME = re.compile(r"^eps:([0-9.eE+-]+)$")


def get_case(name: str, check: bool = True, seed: int = 0) -> CaseSpec:
    """Look up a case by name; ``eps:<value>`` accepts any value in (0, 1]."""
    m = _EPS_NAME.match(name)
    if m:
        try:
            case = eps_case(float(m.group(1)))
        except ValueError as exc:
            raise KeyError(str(exc)) from None
    else:
        table = {c.name: c for c in registry(check=False)}
        if name not in table:
            raise KeyError(f"unknown case {name!r}; known cases: {', '.join(table)}")
        case = table[name]
    if check:
        validate(case, seed=seed)
    return case
