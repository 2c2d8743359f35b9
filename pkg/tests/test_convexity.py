import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plma.convexity import (
    boundary_data,
    modulus_curve,
    modulus_lower_bound,
    modulus_of_convexity,
    supporting_plane,
)
from plma.errors import GridError, NonConvexError
from plma.grid import Grid, disc_mask, sample


def disc(fun, n=65, R=1.0):
    g = Grid.square(R, n)
    return sample(fun, g, disc_mask(g, R))


def eps_family(eps):
    return lambda a, b: 0.5 * eps * a * a + 0.5 / eps * b * b


radial = eps_family(1.0)


def expcase(a, b):
    return np.exp(a) - 1.0 - a + 0.5 * b * b


def test_supporting_plane_examples():
    u = disc(radial)
    p = supporting_plane(u, (0.0, 0.0))
    assert p.value_at_z == 0.0 and p.slope == (0.0, 0.0)
    p = supporting_plane(u, (0.5, 0.0))
    assert p.value_at_z == pytest.approx(0.125, abs=1e-15)
    assert p.slope == pytest.approx((0.5, 0.0), abs=1e-14)
    assert p(1.0, 0.3) == pytest.approx(0.125 + 0.5 * 0.5)
    p = supporting_plane(disc(eps_family(0.5)), (0.0, 0.0))
    assert p.value_at_z == 0.0 and p.slope == pytest.approx((0.0, 0.0), abs=1e-15)


def test_supporting_plane_errors():
    u = disc(radial)
    with pytest.raises(GridError):
        supporting_plane(u, (0.999, 0.999))
    with pytest.raises(NonConvexError):
        supporting_plane(disc(lambda a, b: -radial(a, b)), (0.2, 0.1))


def test_supporting_plane_below_on_ladder():
    u = disc(expcase)
    X1, X2 = u.grid.mesh()
    for z1 in np.linspace(-0.6, 0.6, 5):
        for z2 in np.linspace(-0.6, 0.6, 5):
            p = supporting_plane(u, (z1, z2))
            gap = (u.values - p(X1, X2))[u.mask]
            assert gap.min() >= -1e-8 * u.scale()


def _quadratic_oracle(eps, t):
    # minimise eps s1^2/2 + s2^2/(2 eps) over |s| = t by a dense angle scan
    th = np.linspace(0, np.pi, 200001)
    return float(np.min(0.5 * eps * (t * np.cos(th)) ** 2 + 0.5 / eps * (t * np.sin(th)) ** 2))


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.25, 0.1])
@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_modulus_quadratic_family(eps, t):
    u = disc(eps_family(eps))
    h = u.grid.h1
    m = modulus_of_convexity(u, t).m
    exact = _quadratic_oracle(eps, t)
    assert exact == pytest.approx(eps * t * t / 2, rel=1e-9)
    assert exact <= m <= exact + 2 * eps * t * h


def test_modulus_attaining_pair_is_admissible():
    u = disc(eps_family(0.5))
    res = modulus_of_convexity(u, 0.5)
    d = math.dist(res.z, res.x)
    assert d > 0.5
    u_x = 0.25 * res.x[0] ** 2 + res.x[1] ** 2
    u_z = 0.25 * res.z[0] ** 2 + res.z[1] ** 2
    grad = (0.5 * res.z[0], 2 * res.z[1])
    recomputed = u_x - u_z - grad[0] * (res.x[0] - res.z[0]) - grad[1] * (res.x[1] - res.z[1])
    assert recomputed == pytest.approx(res.m, abs=1e-10)


def test_modulus_refinement_monotone():
    u = disc(expcase)
    vals = [modulus_of_convexity(u, 0.5, level).m for level in range(4)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_modulus_matches_full_bruteforce_on_small_grid():
    u = disc(expcase, n=21)
    g = u.grid
    X1, X2 = g.mesh()
    from plma.grid import fd_gradient, interior_mask
    d1, d2 = fd_gradient(u)
    inner = interior_mask(g, u.mask)
    best = np.inf
    for zi, zj in np.argwhere(inner):
        z = (X1[zi, zj], X2[zi, zj])
        gap = u.values - u.values[zi, zj] - d1.values[zi, zj] * (X1 - z[0]) - d2.values[zi, zj] * (X2 - z[1])
        far = np.hypot(X1 - z[0], X2 - z[1]) > 0.5
        best = min(best, gap[far & u.mask].min())
    assert modulus_of_convexity(u, 0.5, refinement=0).m == pytest.approx(best, abs=1e-15)
    assert modulus_of_convexity(u, 0.5).m <= best


def test_modulus_affine_is_zero():
    u = disc(lambda a, b: 1.0 + 2.0 * a - 0.5 * b)
    assert abs(modulus_of_convexity(u, 0.5).m) < 1e-12


def test_modulus_too_large_t():
    with pytest.raises(ValueError):
        modulus_of_convexity(disc(radial, n=17), 2.5)


@settings(max_examples=15, deadline=None)
@given(c=st.floats(-3, 3), p1=st.floats(-3, 3), p2=st.floats(-3, 3))
def test_modulus_affine_invariance(c, p1, p2):
    base = modulus_of_convexity(disc(expcase, n=33), 0.5)
    shifted = modulus_of_convexity(disc(lambda a, b: expcase(a, b) + c + p1 * a + p2 * b, n=33), 0.5)
    assert shifted.m == pytest.approx(base.m, abs=1e-12)


def test_boundary_data_examples():
    bd = boundary_data(disc(radial), 1.0)
    assert bd.m0 == pytest.approx(0.5, abs=1e-14) and bd.b == pytest.approx(1.0, abs=1e-13)
    bd = boundary_data(disc(eps_family(0.5)), 1.0)
    assert bd.m0 == pytest.approx(0.25, abs=1e-14) and bd.b == pytest.approx(2.0, abs=1e-13)


def test_boundary_data_exp_case():
    # 1-D oracle: golden-section search of the closed forms on the circle
    from scipy.optimize import minimize_scalar
    m0 = minimize_scalar(lambda th: expcase(math.cos(th), math.sin(th)), bounds=(2.5, 3.8), method="bounded").fun
    b = -minimize_scalar(lambda th: -math.hypot(math.exp(math.cos(th)) - 1, math.sin(th)),
                         bounds=(-0.5, 0.5), method="bounded").fun
    assert m0 == pytest.approx(math.exp(-1), abs=1e-8)
    assert b == pytest.approx(math.e - 1, abs=1e-8)
    bd = boundary_data(disc(expcase, n=129), 1.0)
    h = 2.0 / 128
    assert bd.m0 == pytest.approx(m0, abs=1e-8)
    assert bd.theta_m0 == pytest.approx(math.pi)
    assert abs(bd.b - b) < 5 * h * h


def test_boundary_data_errors():
    with pytest.raises(GridError):
        boundary_data(disc(radial, n=17), 1.5)
    with pytest.raises(ValueError):
        boundary_data(disc(radial, n=17), 0.5, n_samples=100)


def test_m0_dominates_modulus_at_R():
    for fun in (radial, eps_family(0.25), expcase):
        u = disc(fun)
        bd = boundary_data(u, 1.0)
        m = modulus_of_convexity(u, 1.0).m
        assert bd.m0 >= m - 10 * u.grid.h1 * u.scale()


def test_lower_bound_values():
    lb = modulus_lower_bound(1.0, 1.0, 1.0)
    oracle = mpmath.mpf("0.5") / (mpmath.e ** 128 - 1)
    assert lb.value == pytest.approx(float(oracle), rel=1e-13)
    assert not lb.underflow
    t = 0.3
    lb = modulus_lower_bound(t, t, 1.0)
    assert lb.value == pytest.approx(t * t * float(oracle) * 2 / 2, rel=1e-12)
    lb = modulus_lower_bound(2.0, 1.0, 1.0)
    assert lb.value == pytest.approx(float(1 / (mpmath.e ** 512 - 1)), rel=1e-12)
    assert not lb.underflow
    lb = modulus_lower_bound(3.0, 1.0, 1.0)
    assert lb == (0.0, True)


def test_lower_bound_small_b_asymptote():
    t, C0 = 0.7, 2.0
    for b in (1e-4, 1e-6):
        assert modulus_lower_bound(b, t, C0).value == pytest.approx(t**3 / (256 * C0 * b), rel=1e-3)


def test_lower_bound_rejects_non_positive():
    for args in [(0, 1, 1), (1, -1, 1), (1, 1, 0)]:
        with pytest.raises(ValueError):
            modulus_lower_bound(*args)


def test_modulus_curve_csv():
    u = disc(radial, n=33)
    curve = modulus_curve(u, [0.5, 1.0], C0=1.0)
    lines = curve.to_csv().splitlines()
    assert lines[0] == "t,m_discrete,lower_bound,slack_ratio"
    assert len(lines) == 3
    assert all(curve.m >= curve.lower_bound)
