import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plma.cases import (
    EPSILONS,
    case_names,
    eps_case,
    exp_case,
    get_case,
    registry,
    validate,
)
from plma.errors import CaseValidationError


def test_registry_contents():
    cases = registry()
    assert len(cases) >= 7
    names = [c.name for c in cases]
    assert names == case_names()
    for e in EPSILONS:
        assert f"eps:{e:g}" in names
    assert {"radial", "quad", "exp"} <= set(names)


def test_every_case_passes_probing():
    for c in registry(check=False):
        assert validate(c) <= 1e-10


def test_exp_case_rhs_range():
    c = exp_case()
    assert c.C0 == pytest.approx(math.e)
    # f = e^x1 is monotone in x1, so its range on the unit disc is [1/e, e]
    f = c.f(np.array([-1.0, 1.0]), np.zeros(2))
    np.testing.assert_allclose(f, [1 / math.e, math.e])


def test_quad_case_hessian():
    c = get_case("quad")
    np.testing.assert_allclose(c.hessian0(), [[1.0, 0.5], [0.5, 2.0]])
    assert np.linalg.det(c.hessian0()) == pytest.approx(1.75)


def test_tampered_rhs_fails_probing():
    with pytest.raises(CaseValidationError, match="det"):
        validate(get_case("exp").with_f_scale(2.0))
    assert validate(get_case("exp").with_f_scale(1.0)) <= 1e-10


def test_rhs_outside_band_fails():
    c = get_case("radial")
    from dataclasses import replace
    with pytest.raises(CaseValidationError, match="C0"):
        validate(replace(c, d2u=lambda a, b: (2 + 0 * a, 0 * a, 2 + 0 * a),
                         f=lambda a, b: 4 + 0 * a))


def test_normalisation_is_checked():
    c = get_case("radial")
    from dataclasses import replace
    with pytest.raises(CaseValidationError, match="u\\(0\\)"):
        validate(replace(c, u=lambda a, b: 0.5 * (a * a + b * b) + 1.0))


def test_get_case_lookup():
    assert get_case("eps:0.3").eps == 0.3
    with pytest.raises(KeyError, match="known cases"):
        get_case("nosuch")
    with pytest.raises(KeyError):
        get_case("eps:2")


@settings(max_examples=25, deadline=None)
@given(eps=st.floats(0.05, 1.0), lam=st.sampled_from([0.5, 2.0]))
def test_eps_family_and_rescaling_stay_exact(eps, lam):
    c = eps_case(eps)
    assert validate(c, n_probes=500) <= 1e-10
    assert validate(c.rescaled(lam), n_probes=500) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(y1=st.floats(-0.6, 1.7), y2=st.floats(-1, 1))
def test_exp_conjugate_closed_form(y1, y2):
    # brute-force sup over x1 of x1 y1 - u(x1, y2), on a range wide enough to hold the maximiser
    c = exp_case()
    xs = np.linspace(-3.0, 3.0, 600001)
    brute = np.max(xs * y1 - c.u(xs, y2))
    assert c.ustar(y1, y2) == pytest.approx(brute, abs=1e-9)
