import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plma.errors import GridError, NonFiniteError
from plma.grid import (
    Grid,
    GridFunction,
    convexity_check,
    disc_mask,
    fd_gradient,
    fd_hessian,
    interior_mask,
    interpolate,
    interpolate_many,
    ma_residual,
    sample,
)
from plma.gridio import dumps_csv, loads_table, dumps_table


def radial(x1, x2):
    return 0.5 * (x1**2 + x2**2)


def expcase(x1, x2):
    return np.exp(x1) - 1.0 - x1 + 0.5 * x2**2


def cross_quad(x1, x2):
    return 0.5 * (x1**2 + x1 * x2 + 2.0 * x2**2)


def eps_family(eps):
    return lambda x1, x2: 0.5 * eps * x1**2 + 0.5 / eps * x2**2


def test_grid_spacing_and_endpoints():
    g = Grid(-1.0, 2.0, 0.0, 1.0, 7, 5)
    assert g.h1 == pytest.approx(0.5)
    assert g.h2 == pytest.approx(0.25)
    assert g.x1[0] == -1.0 and g.x1[-1] == 2.0
    assert g.node(6, 4) == (2.0, 1.0)
    with pytest.raises(GridError):
        Grid(0, 1, 0, 1, 2, 5)


def test_sample_radial_three_nodes():
    u = sample(radial, Grid.square(1.0, 3))
    # direct evaluation of |x|^2/2 at the nine nodes of [-1, 1]^2
    expected = np.array([[1.0, 0.5, 1.0], [0.5, 0.0, 0.5], [1.0, 0.5, 1.0]])
    np.testing.assert_array_equal(u.values, expected)
    assert u.mask is None


def test_sample_zero_and_scalar_evaluator():
    g = Grid.square(1.0, 5)
    assert not sample(lambda a, b: 0.0, g).values.any()
    u = sample(lambda a, b: math.exp(a) - 1 - a + 0.5 * b * b, Grid.square(1.0, 3))
    assert u.values[1, 1] == 0.0
    assert u.values[2, 1] == pytest.approx(math.e - 2.0, abs=1e-15)


def test_sample_rejects_non_finite():
    with pytest.raises(NonFiniteError, match="node"):
        sample(lambda a, b: 1.0 / a, Grid.square(1.0, 3))


def test_gradient_exact_on_quadratic():
    g = Grid.square(1.0, 9)
    d1, d2 = fd_gradient(sample(radial, g))
    X1, X2 = g.mesh()
    np.testing.assert_allclose(d1.values, X1, atol=1e-13)
    np.testing.assert_allclose(d2.values, X2, atol=1e-13)
    c1, c2 = fd_gradient(sample(lambda a, b: 3.0 + 0 * a, g))
    assert np.abs(c1.values).max() == 0 and np.abs(c2.values).max() == 0


def test_gradient_exp_case():
    g = Grid.square(1.0, 201)
    d1, _ = fd_gradient(sample(expcase, g))
    i = int(np.argmin(np.abs(g.x1 - 0.5)))
    j = g.n2 // 2
    assert abs(d1.values[i, j] - (math.exp(0.5) - 1.0)) < 5e-5


def test_hessian_exact_on_quadratics():
    g = Grid.square(1.0, 11)
    H = fd_hessian(sample(cross_quad, g))
    inner = interior_mask(g)
    np.testing.assert_allclose(H.d11[inner], 1.0, atol=1e-11)
    np.testing.assert_allclose(H.d12[inner], 0.5, atol=1e-11)
    np.testing.assert_allclose(H.d22[inner], 2.0, atol=1e-11)
    He = fd_hessian(sample(eps_family(0.5), g))
    np.testing.assert_allclose(He.d11[inner], 0.5, atol=1e-11)
    np.testing.assert_allclose(He.d12[inner], 0.0, atol=1e-11)
    np.testing.assert_allclose(He.d22[inner], 2.0, atol=1e-11)


def test_hessian_exp_case_at_origin():
    g = Grid.square(1.0, 201)
    H = fd_hessian(sample(expcase, g))
    c = g.n1 // 2
    assert abs(H.d11[c, c] - 1.0) < 1e-4
    assert abs(H.d12[c, c]) < 1e-12
    assert abs(H.d22[c, c] - 1.0) < 1e-10


def _sup_errors(n):
    g = Grid.square(1.0, n)
    u = sample(expcase, g)
    X1, X2 = g.mesh()
    d1, d2 = fd_gradient(u)
    H = fd_hessian(u)
    eg = max(np.abs(d1.values - (np.exp(X1) - 1)).max(), np.abs(d2.values - X2).max())
    eh = max(np.abs(H.d11 - np.exp(X1)).max(), np.abs(H.d12).max(), np.abs(H.d22 - 1).max())
    return eg, eh


def test_refinement_order():
    errs = [_sup_errors(n) for n in (17, 33, 65)]
    for k in range(2):
        for c in range(2):
            order = math.log2(errs[k][c] / errs[k + 1][c])
            assert order >= 1.8, (k, c, order)


def test_ma_residual_cases():
    g = Grid.square(1.0, 9)
    one = sample(lambda a, b: 1.0, g)
    r = ma_residual(sample(radial, g), one)
    assert np.abs(r.values[r.mask]).max() < 1e-12
    assert np.isnan(r.values[0, 0])
    r = ma_residual(sample(cross_quad, g), sample(lambda a, b: 1.75, g))
    assert np.abs(r.values[r.mask]).max() < 1e-11
    for eps in (1.0, 0.5, 0.1):
        r = ma_residual(sample(eps_family(eps), g), one)
        assert np.abs(r.values[r.mask]).max() < 1e-9
    with pytest.raises(GridError):
        ma_residual(sample(radial, g), sample(radial, Grid.square(1.0, 7)))


def test_ma_residual_self_consistency():
    g = Grid.square(1.0, 17)
    u = sample(lambda a, b: np.cosh(a) + np.sin(a * b), g)
    f = GridFunction(g, fd_hessian(u).det())
    r = ma_residual(u, f)
    assert np.abs(r.values[r.mask]).max() == 0.0


def test_convexity_check():
    g = Grid.square(1.0, 9)
    res = convexity_check(sample(radial, g))
    assert res.convex and res.lambda_min == pytest.approx(1.0)
    assert not convexity_check(sample(lambda a, b: -radial(a, b), g))
    res = convexity_check(sample(eps_family(0.1), g))
    assert res.convex and res.lambda_min == pytest.approx(0.1)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-5, 5), p1=st.floats(-5, 5), p2=st.floats(-5, 5))
def test_convexity_affine_invariance(c, p1, p2):
    g = Grid.square(1.0, 9)
    base = convexity_check(sample(expcase, g))
    shifted = convexity_check(sample(lambda a, b: expcase(a, b) + c + p1 * a + p2 * b, g))
    assert shifted.convex == base.convex
    assert shifted.lambda_min == pytest.approx(base.lambda_min, abs=1e-9)


def test_interpolate_nodes_and_cubics():
    g = Grid.square(1.0, 9)
    u = sample(expcase, g)
    for i, j in [(0, 0), (3, 5), (8, 8), (4, 4)]:
        assert interpolate(u, g.node(i, j)) == u.values[i, j]
    cube = sample(lambda a, b: a**3, g)
    for p in [(0.37, -0.81), (0.99, 0.99), (-0.93, 0.1)]:
        assert interpolate(cube, p) == pytest.approx(p[0] ** 3, abs=1e-14)
    assert interpolate(sample(radial, g), (0.35, -0.15)) == pytest.approx(0.0725, abs=1e-15)


def test_interpolate_fourth_order():
    errs = []
    for n in (17, 33, 65):
        g = Grid.square(1.0, n)
        u = sample(expcase, g)
        pts = np.linspace(-0.97, 0.97, 41)
        P1, P2 = np.meshgrid(pts, pts * 0.9)
        errs.append(np.abs(interpolate_many(u, P1, P2) - expcase(P1, P2)).max())
    assert math.log2(errs[0] / errs[1]) > 3.5
    assert math.log2(errs[1] / errs[2]) > 3.5


def test_interpolate_out_of_bounds():
    u = sample(radial, Grid.square(1.0, 5))
    with pytest.raises(GridError):
        interpolate(u, (1.5, 0.0))


def test_disc_mask_and_masked_function():
    g = Grid.square(1.0, 5)
    m = disc_mask(g, 1.0)
    assert m[2, 0] and m[0, 2] and not m[0, 0]
    vals = np.where(m, 1.0, np.nan)
    u = GridFunction(g, vals, m)
    assert u.sup() == 1.0
    with pytest.raises(NonFiniteError):
        GridFunction(g, vals)


def test_immutable_values():
    u = sample(radial, Grid.square(1.0, 5))
    with pytest.raises(ValueError):
        u.values[0, 0] = 3.0


def test_table_roundtrip_and_csv():
    g = Grid(-1.0, 1.0, -0.5, 0.5, 5, 3)
    m = np.ones(g.shape, bool)
    m[0, 0] = False
    u = GridFunction(g, sample(expcase, g).values, m)
    back = loads_table(dumps_table(u))
    assert back.grid == g
    np.testing.assert_array_equal(back.values, u.values)
    np.testing.assert_array_equal(back.mask, m)
    text = dumps_csv(u)
    lines = text.splitlines()
    assert lines[0] == "i,j,x1,x2,value,mask"
    assert len(lines) == 1 + 15
    assert lines[1].startswith("0,0,-1,-0.5,")
    assert lines[1].endswith(",0")
