import math

import numpy as np
import pytest

from plma.elliptic import (
    EllipticProblem,
    SolveReport,
    linear_elliptic_solve,
    quasilinear_residual,
    solve_quasilinear,
    unknown_nodes,
)
from plma.errors import CoefficientBoundsError, ConvergenceError, GridError, StallError
from plma.grid import Grid, disc_mask, sample
from plma.rates import observed_order


def vstar(y1, y2):
    return (1 + y1) * np.log(1 + y1) - y1 - 0.5 * y2 * y2


def expf(p, y2):
    return np.exp(p)


def one(p, y2):
    return np.ones_like(p)


def harmonic(y1, y2):
    return 0.5 * (y1 * y1 - y2 * y2)


def box(n, half=0.5):
    return Grid(-half, half, -half, half, n, n)


def full(g):
    return np.ones(g.shape, bool)


def sup_error(v, exact):
    Y1, Y2 = v.grid.mesh()
    return float(np.max(np.abs(v.values - exact(Y1, Y2))[v.mask]))


def test_unknown_nodes():
    g = box(5)
    unk = unknown_nodes(full(g))
    assert unk.sum() == 9 and not unk[0].any() and not unk[:, -1].any()


def test_linear_harmonic_quadratic_is_stencil_exact():
    g = Grid.square(1.0, 33)
    P = EllipticProblem.from_function(g, disc_mask(g, 1.0), one, 1.0, harmonic)
    v = linear_elliptic_solve(np.ones(g.shape), P, tol=1e-10)
    assert sup_error(v, harmonic) < 1e-10


def test_linear_zero_data():
    g = box(17)
    P = EllipticProblem.from_function(g, full(g), one, 1.0, lambda a, b: 0 * a)
    v = linear_elliptic_solve(np.ones(g.shape), P)
    assert np.abs(v.values).max() == 0.0


def test_linear_variable_coefficient_manufactured():
    errs = []
    for n in (17, 33, 65):
        g = box(n)
        Y1, _ = g.mesh()
        P = EllipticProblem.from_function(g, full(g), expf, 2.0, vstar)
        v = linear_elliptic_solve(1 + Y1, P, tol=1e-11)
        errs.append(sup_error(v, vstar))
        assert errs[-1] <= 5 * g.h1**2
    assert observed_order(errs[0], errs[1]) >= 1.8


def test_linear_rejects_out_of_band_coefficient():
    g = box(9)
    P = EllipticProblem.from_function(g, full(g), one, 2.0, harmonic)
    with pytest.raises(CoefficientBoundsError):
        linear_elliptic_solve(np.full(g.shape, 3.0), P)


def test_linear_iteration_cap():
    g = box(65)
    P = EllipticProblem.from_function(g, full(g), one, 1.0, vstar)
    with pytest.raises(ConvergenceError, match="sweeps"):
        linear_elliptic_solve(np.ones(g.shape), P, tol=1e-12, max_iter=32)


def test_problem_validation():
    g = box(9)
    m = np.zeros(g.shape, bool)
    with pytest.raises(GridError):
        EllipticProblem.from_function(g, m, one, 1.0, harmonic)
    m[1:4, 1:4] = True
    m[5:8, 5:8] = True
    with pytest.raises(GridError, match="components"):
        EllipticProblem.from_function(g, m, one, 1.0, harmonic)
    with pytest.raises(GridError, match="finite"):
        EllipticProblem.from_function(g, full(g), one, 1.0, lambda a, b: np.log(a + 0.1))


def test_maximum_principle_holds_on_solves():
    g = Grid.square(1.0, 33)
    rng = np.random.default_rng(1)
    P = EllipticProblem.from_function(g, disc_mask(g, 1.0), one, 3.0,
                                      lambda a, b: np.sin(3 * a) + np.cos(5 * b))
    a = rng.uniform(1 / 3, 3, g.shape)
    v = linear_elliptic_solve(a, P)
    bnd = P.boundary_nodes
    assert v.values[P.unknown].max() <= v.values[bnd].max() + 1e-9
    assert v.values[P.unknown].min() >= v.values[bnd].min() - 1e-9


def test_quasilinear_linear_case_needs_at_most_one_step():
    g = Grid.square(1.0, 33)
    P = EllipticProblem.from_function(g, disc_mask(g, 1.0), one, 1.0, harmonic)
    v, rep = solve_quasilinear(P)
    assert rep.converged and rep.outer_iterations <= 1
    assert sup_error(v, harmonic) < 1e-9


def test_quasilinear_constant_two():
    def target(y1, y2):
        return 0.5 * (y1 * y1 - 2 * y2 * y2)

    g = box(33)
    P = EllipticProblem.from_function(g, full(g), lambda p, y2: 2 + 0 * p, 2.0, target)
    v, rep = solve_quasilinear(P)
    assert rep.converged
    assert sup_error(v, target) < 1e-9


def test_quasilinear_manufactured_exp_case():
    g = box(129)
    P = EllipticProblem.from_function(g, full(g), expf, 2.0, vstar)
    v, rep = solve_quasilinear(P, theta=0.5)
    assert rep.outer_iterations <= 30
    assert rep.final_residual <= 1e-8
    assert sup_error(v, vstar) <= 5 * g.h1**2
    # both code paths agree on the residual
    r = quasilinear_residual(v, expf)
    assert np.nanmax(np.abs(r.values)) <= 1e-8
    hist = rep.residual_history
    assert all(b <= a for a, b in zip(hist[3:], hist[4:]))


def test_quasilinear_manufactured_order():
    # the leading h^2 truncation terms cancel for this pair, so the error is
    # O(h^4) and the tolerance must sit below it to see the rate
    errs = []
    for n in (17, 33, 65):
        g = box(n)
        P = EllipticProblem.from_function(g, full(g), expf, 2.0, vstar)
        v, _ = solve_quasilinear(P, tol=1e-10, max_outer=400)
        errs.append(sup_error(v, vstar))
    assert observed_order(errs[0], errs[1]) >= 1.8
    assert observed_order(errs[1], errs[2]) >= 1.8


def test_quasilinear_residual_examples():
    g = box(65)
    r = quasilinear_residual(sample(harmonic, g), one)
    assert np.nanmax(np.abs(r.values)) < 1e-10
    r = quasilinear_residual(sample(vstar, g), expf)
    assert np.nanmax(np.abs(r.values)) <= 10 * g.h1**2
    r = quasilinear_residual(sample(lambda a, b: b * b, g), one)
    np.testing.assert_allclose(r.values[r.mask], 2.0, atol=1e-9)


def test_stall_and_cap():
    g = box(17)
    # coefficient depends on the gradient so strongly the damped map cannot settle
    P = EllipticProblem.from_function(g, full(g), lambda p, y2: np.exp(40 * p), 1e30, vstar)
    with pytest.raises(ConvergenceError):
        solve_quasilinear(P, max_outer=25)
    P = EllipticProblem.from_function(g, full(g), expf, 2.0, vstar)
    with pytest.raises(ConvergenceError, match="Picard"):
        solve_quasilinear(P, max_outer=2)


def test_report_record():
    g = box(17)
    P = EllipticProblem.from_function(g, full(g), expf, 2.0, vstar)
    _, rep = solve_quasilinear(P)
    rec = rep.to_record()
    assert rec["converged"] and rec["outer_iterations"] == len(rec["residual_history"]) - 1
    assert isinstance(SolveReport().to_record()["inner_iterations"], list)
