from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from obsv import config
from obsv.errors import DimensionError, HypothesisNotMet, OrderCapError
from obsv.identities import random_rational_matrix
from obsv.matpoly import MatPoly, evaluate, f_symbolic, p_sequence, psi, q_partial, r_decomposition, rank_certificate

A2 = np.array([[0, 1], [0, 0]])
B2 = np.array([[0, 1], [1, 0]])


def test_psi_of_identity_is_input_matrix():
    P1 = psi(MatPoly.identity(2, exact=True), A2, B2)
    assert P1 == MatPoly({(0,): A2, (1,): B2}, 1, 2, exact=True)


def test_second_polynomial_by_hand():
    # P_2 = (A + X0 B)^2 + X1 B; here A^2 = 0, AB + BA = I, B^2 = I
    P2 = p_sequence(A2, B2, 2, exact=True)[2]
    expected = MatPoly({(1, 0): np.eye(2, dtype=int), (0, 1): B2, (2, 0): np.eye(2, dtype=int)}, 2, 2, exact=True)
    assert P2 == expected
    assert P2.pretty() == "X0 * [1, 0; 0, 1]\nX1 * [0, 1; 1, 0]\nX0^2 * [1, 0; 0, 1]"


def test_exact_and_float_backends_agree(rng):
    A = random_rational_matrix(rng, 3)
    B = random_rational_matrix(rng, 3)
    ex = p_sequence(A, B, 5, exact=True)
    fl = p_sequence(A.astype(float), B.astype(float), 5)
    v = rng.uniform(-1, 1, 5)
    for Pe, Pf in zip(ex, fl):
        np.testing.assert_allclose(evaluate(Pe, v), evaluate(Pf, v), rtol=1e-12, atol=1e-12)


def test_exact_coefficients_stay_rational(rng):
    A = random_rational_matrix(rng, 2)
    B = random_rational_matrix(rng, 2)
    P3 = p_sequence(A, B, 3, exact=True)[3]
    assert all(isinstance(x, (int, Fraction)) for M in P3.terms.values() for x in M.ravel())


def test_sequence_respects_order_cap():
    with pytest.raises(OrderCapError):
        p_sequence(A2, B2, config.KMAX_LIMIT + 1)


def test_polynomial_algebra():
    X = MatPoly({(1,): np.eye(2)}, 1, 2)
    one = MatPoly.identity(2).widen(1)
    sq = (X + one) * (X + one)
    assert sq == X * X + X.scale(2.0) + one
    assert sq.diff(0) == X.scale(2.0) + one.scale(2.0)
    assert (sq - sq).is_zero()
    assert sq.total_degree() == 2 and sq.min_nvars == 1


def test_evaluate_needs_enough_values():
    P2 = p_sequence(A2, B2, 2)[2]
    with pytest.raises(DimensionError):
        evaluate(P2, [1.0])


def test_q_partial_index_range():
    P2 = p_sequence(A2, B2, 2)[2]
    with pytest.raises(IndexError):
        q_partial(P2, 3)


def test_r_decomposition_float_residual_small(rng):
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 3))
    for i in range(1, 5):
        _, res = r_decomposition(A, B, i)
        assert res <= 1e-9


def _small_rational(draw_ints, n):
    M = np.empty((n, n), dtype=object)
    for idx, x in enumerate(draw_ints):
        M[idx // n, idx % n] = Fraction(x, 2)
    return M


@given(st.integers(1, 3), st.data())
def test_increment_identity_exact(n, data):
    ints = st.lists(st.integers(-3, 3), min_size=n * n, max_size=n * n)
    A = _small_rational(data.draw(ints), n)
    B = _small_rational(data.draw(ints), n)
    seq = p_sequence(A, B, 7, exact=True)
    for i in range(1, 3):
        for ell in range(1, 4):
            lhs = q_partial(seq[i + 1 + ell], i + 1)
            rhs = psi(q_partial(seq[i + ell], i), A, B) + q_partial(seq[i + ell], i + 1)
            assert lhs == rhs


@given(st.integers(1, 3), st.data())
def test_degree_and_variable_bounds(n, data):
    ints = st.lists(st.integers(-3, 3), min_size=n * n, max_size=n * n)
    A = _small_rational(data.draw(ints), n)
    B = _small_rational(data.draw(ints), n)
    for k, P in enumerate(p_sequence(A, B, 5, exact=True)):
        assert P.total_degree() <= k
        assert P.min_nvars <= k


def test_f_symbolic_order_zero():
    w = np.array([0.6, 0.8])
    assert f_symbolic(A2, B2, [[1, 0]], 1, 0, [], w) == pytest.approx(0.8)


def test_rank_certificate_sys2d():
    cert = rank_certificate(A2, B2, [[1, 0]], 0, [0.3, -0.2, 0.1], np.array([0.6, 0.8]), N=3)
    assert cert["rank"] == 3
    assert cert["jacobian"].shape[0] == 3


def test_rank_certificate_needs_input_coupling():
    with pytest.raises(HypothesisNotMet):
        rank_certificate(A2, np.zeros((2, 2)), [[1, 0]], 0, [0.3], np.array([1.0, 0.0]))
