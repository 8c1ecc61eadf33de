import numpy as np
import pytest
from hypothesis import given, strategies as st

from obsv.errors import DimensionError, HypothesisNotMet, OrderCapError
from obsv.fields import (PolynomialField, ZeroField, alpha_factorial, check_feedback, compose_univariate,
                         multi_indices, profile_derivatives)


def test_multi_indices_count():
    # number of monomials of degree <= 3 in 2 variables
    assert len(multi_indices(2, 3)) == 10
    assert multi_indices(2, 1) == ((0, 0), (1, 0), (0, 1))


def test_profile_vanishes_outside_unit():
    vals = profile_derivatives(np.array([1.0, 1.5, 3.0]), 4)
    assert not np.any(vals)


def test_profile_value_and_first_derivative():
    s = 0.25
    w = 1.0 / (1.0 - s)
    d = profile_derivatives(s, 1)
    assert d[0] == pytest.approx(np.exp(-w))
    assert d[1] == pytest.approx(-w * w * np.exp(-w))


@given(st.floats(-2.0, 0.9), st.integers(1, 5))
def test_profile_derivatives_match_finite_differences(s, j):
    h = 1e-5
    d = profile_derivatives(np.array([s - h, s + h]), j)
    mid = profile_derivatives(s, j)
    fd = (d[j - 1, 1] - d[j - 1, 0]) / (2 * h)
    assert fd == pytest.approx(mid[j], rel=1e-4, abs=1e-8 * (1 + abs(mid[j])))


def test_profile_order_cap():
    with pytest.raises(OrderCapError):
        profile_derivatives(0.0, 100)


def test_compose_univariate_exp_of_linear():
    # exp(h) to order 4 from derivatives of exp at 0 and inner = h
    series = compose_univariate(np.ones(5), {(1,): 1.0}, 4)
    for k in range(5):
        assert series[(k,)] == pytest.approx(1.0 / alpha_factorial((k,)))


def test_polynomial_taylor_matches_partials():
    f = PolynomialField(2, {(2, 1): 3.0, (0, 1): -1.0, (1, 0): 2.0})
    x0 = np.array([0.5, -2.0])
    p = f.partials(x0, 3)
    # d/dx1 = 6 x1 x2 + 2, d/dx2 = 3 x1^2 - 1, d2/dx1dx2 = 6 x1
    assert p[(1, 0)] == pytest.approx(6 * 0.5 * -2.0 + 2)
    assert p[(0, 1)] == pytest.approx(3 * 0.25 - 1)
    assert p[(1, 1)] == pytest.approx(6 * 0.5)
    assert p[(2, 1)] == pytest.approx(6.0)
    assert p[(0, 2)] == pytest.approx(0.0)


def test_polynomial_vectorized_value():
    f = PolynomialField.linear([-1.0, -1.0])
    np.testing.assert_allclose(f.value(np.array([[1, 2], [3, 4]])), [-3.0, -7.0])
    assert f.degree == 1


def test_polynomial_rejects_bad_exponent():
    with pytest.raises(DimensionError):
        PolynomialField(2, {(1,): 1.0})


def test_sum_field_and_dimension_check():
    f = PolynomialField.linear([1.0, 0.0]) + PolynomialField.linear([0.0, 2.0])
    assert f.value(np.array([1.0, 1.0])) == pytest.approx(3.0)
    with pytest.raises(DimensionError):
        PolynomialField.linear([1.0]) + ZeroField(2)


def test_feedback_must_vanish_at_origin():
    with pytest.raises(HypothesisNotMet):
        check_feedback(PolynomialField(2, {(0, 0): 1.0}))
    check_feedback(ZeroField(2))
