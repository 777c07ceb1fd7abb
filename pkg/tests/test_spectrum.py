import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conetrace.errors import AmbiguousNearCritical, InvalidInput
from conetrace.spectrum import (
    AxisymmetricOpening,
    classify,
    exponents,
    lambda_exact,
    lambda_Nq,
    lambda_numeric,
    phi_on_grid,
)

RIGHT = math.pi / 2


@pytest.mark.parametrize("dim,angle,value", [(2, math.pi, 1.0), (3, RIGHT, 2.0), (2, RIGHT, 4.0)])
def test_lambda_exact(dim, angle, value):
    assert lambda_exact(AxisymmetricOpening(dim, angle)) == pytest.approx(value)


def test_lambda_exact_absent_for_general_cap():
    assert lambda_exact(AxisymmetricOpening(3, 1.0)) is None


@pytest.mark.parametrize("dim,angle", [(1, 1.0), (3, 0.0), (3, math.pi), (2, 2 * math.pi), (3, float("nan"))])
def test_degenerate_openings_rejected(dim, angle):
    with pytest.raises(InvalidInput):
        AxisymmetricOpening(dim, angle)


@pytest.mark.parametrize(
    "dim,angle,exact,tol", [(3, RIGHT, 2.0, 1e-5), (2, 3 * RIGHT, 4 / 9, 1e-6), (4, RIGHT, 3.0, 1e-5)]
)
def test_lambda_numeric_against_closed_form(dim, angle, exact, tol):
    pair = lambda_numeric(AxisymmetricOpening(dim, angle), 4096)
    err = abs(pair.lambda_S - exact)
    assert err <= tol
    assert err <= pair.estimated_error


def test_ground_state_shape():
    pair = lambda_numeric(AxisymmetricOpening(3, 1.0), 256)
    assert pair.phi[0] == pytest.approx(1.0)
    assert np.all(pair.phi > 0)
    assert np.all(np.diff(pair.phi) < 0)


def test_phi_on_grid_matches_numeric_ground_state():
    op = AxisymmetricOpening(3, 1.0)
    grid = op.theta_grid(256)
    pair = lambda_numeric(op, 256)
    np.testing.assert_allclose(phi_on_grid(op, grid), pair.phi, atol=1e-4)


@pytest.mark.parametrize(
    "lam,dim,alpha,alpha_t,qS", [(2.0, 3, 2.0, 1.0, 2.0), (1.0, 2, 1.0, 1.0, 3.0), (4.0, 2, 2.0, 2.0, 2.0)]
)
def test_exponents_closed_form(lam, dim, alpha, alpha_t, qS):
    e = exponents(lam, dim)
    assert (e.alpha, e.alpha_tilde, e.q_S) == pytest.approx((alpha, alpha_t, qS), rel=1e-15)


@pytest.mark.parametrize("dim,q,value", [(3, 2.0, 2.0), (2, 3.0, 1.0), (3, 2.5, 4 / 9)])
def test_lambda_Nq(dim, q, value):
    assert lambda_Nq(dim, q) == pytest.approx(value, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(lam=st.floats(1e-3, 1e4), dim=st.integers(2, 6))
def test_exponent_identities(lam, dim):
    e = exponents(lam, dim)
    assert e.alpha * e.alpha_tilde == pytest.approx(lam, rel=1e-12)
    assert e.alpha - e.alpha_tilde == pytest.approx(dim - 2, rel=1e-12, abs=1e-12 * e.alpha)
    assert lambda_Nq(dim, e.q_S) == pytest.approx(lam, rel=1e-10)


@pytest.mark.parametrize("dim", [2, 3, 4, 5, 6])
def test_half_space_critical_value(dim):
    e = exponents(dim - 1.0, dim)
    assert e.q_S == pytest.approx((dim + 1) / (dim - 1), abs=1e-9)


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_monotone_in_opening(dim):
    top = (2 * math.pi if dim == 2 else math.pi) * 0.95
    angles = np.linspace(0.2, top, 20)
    lams = [lambda_numeric(AxisymmetricOpening(dim, a), 128).lambda_S for a in angles]
    assert np.all(np.diff(lams) < 0)
    qs = [exponents(lam, dim).q_S for lam in lams]
    assert np.all(np.diff(qs) > 0)


@pytest.mark.parametrize("q,kind,margin", [(1.5, "Subcritical", 10.0), (2.0, "CriticalOrSupercritical", 0.0), (2.5, "CriticalOrSupercritical", 4 / 9 - 2)])
def test_classify_half_space(q, kind, margin):
    c = classify(AxisymmetricOpening(3, RIGHT), q)
    assert c.kind == kind
    assert c.margin == pytest.approx(margin, abs=1e-12)


def test_classify_agrees_with_alpha_test():
    op = AxisymmetricOpening(3, 1.0)
    e = exponents(lambda_numeric(op, 4096).lambda_S, 3)
    for q in (1.2, 1.5, e.q_S + 0.1, 3.0):
        assert classify(op, q).subcritical == (e.alpha < 2 / (q - 1))


def test_near_critical_refused():
    op = AxisymmetricOpening(3, 1.0)
    qS = exponents(lambda_numeric(op, 4096).lambda_S, 3).q_S
    with pytest.raises(AmbiguousNearCritical):
        classify(op, qS, n_cells=64)
