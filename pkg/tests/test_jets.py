from math import factorial

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy.integrate import solve_ivp

from obsv.errors import DimensionError
from obsv.fields import PolynomialField
from obsv.jets import FieldJet, Jet, default_kmax, f_numeric, faa_di_bruno, main_eq_check, nfot_probe, ode_jet
from obsv.matpoly import f_symbolic
from obsv.observers import observer_rhs
from obsv.state import CoupledState


def _state(xhat, eps, omega=(0.0, 0.0), xi=None):
    return CoupledState(xhat, eps, np.eye(2) if xi is None else xi, omega)


def test_hand_computed_input_jet(sys2d, luenberger, linear_feedback):
    # x' = A_u x + b u with u = -x1 - x2 from (1, 0); derivatives by hand
    jets = ode_jet(sys2d, luenberger, linear_feedback, None, _state([1, 0], [0, 0]), 4)
    np.testing.assert_allclose(jets.u.coefficients, [-1, 2, -4, 16, -88], atol=1e-12)
    np.testing.assert_allclose(jets.xhat[1], [0, -2], atol=1e-12)


def test_faa_di_bruno_against_polynomial_algebra():
    g = PolynomialField(2, {(2, 1): 1.0, (1, 0): -3.0})
    p1, p2 = Polynomial([1.0, 1.0]), Polynomial([2.0, -1.0, 1.0])
    composite = p1 ** 2 * p2 - 3.0 * p1
    order = 5
    path = Jet(tuple(np.array([p1.deriv(j)(0.0) if j else p1(0.0), p2.deriv(j)(0.0) if j else p2(0.0)])
                     for j in range(order + 1)))
    out = faa_di_bruno(FieldJet.of(g, path[0], order), path)
    expected = [composite(0.0)] + [composite.deriv(j)(0.0) for j in range(1, order + 1)]
    np.testing.assert_allclose(out.coefficients, expected, atol=1e-12)


def test_faa_di_bruno_order_mismatch():
    g = PolynomialField.linear([1.0, 1.0])
    path = Jet((np.zeros(2), np.ones(2)))
    with pytest.raises(ValueError):
        faa_di_bruno(FieldJet.of(g, np.zeros(2), 3), path)


def _coupled_rhs(sys, kalman, Q, feedback):
    """Independent right-hand side for the oracle integration."""
    n = sys.n
    CtC = sys.C.T @ sys.C

    def f(t, y):
        x, e = y[:n], y[n:2 * n]
        xi = y[2 * n:2 * n + n * n].reshape(n, n)
        w = y[2 * n + n * n:]
        u = float(feedback.value(x))
        Au = sys.A + u * sys.B
        corr = xi @ CtC @ e
        dxi = (Au @ xi + xi @ Au.T + Q - xi @ CtC @ xi) if kalman else np.zeros((n, n))
        return np.concatenate([Au @ x + sys.b * u - corr, Au @ e - corr, dxi.ravel(), Au @ w])

    return f


@pytest.mark.parametrize("kind", ["kalman", "luenberger"])
def test_jets_match_integrated_trajectory(sys2d, kalman, luenberger, kind):
    spec = kalman if kind == "kalman" else luenberger
    fb = PolynomialField(2, {(1, 0): -1.0, (0, 1): -1.0, (2, 0): -0.5})
    init = _state([0.4, -0.3], [0.2, 0.1], omega=[0.6, 0.8])
    order = 7
    jets = ode_jet(sys2d, spec, fb, None, init, order)
    f = _coupled_rhs(sys2d, kind == "kalman", np.eye(2), fb)
    y0 = np.concatenate([init.xhat, init.eps, init.xi.ravel(), init.omega])
    t = 0.02
    ref = solve_ivp(f, (0, t), y0, method="DOP853", rtol=1e-13, atol=1e-15).y[:, -1]
    approx = np.concatenate([jets.xhat.polynomial(t), jets.eps.polynomial(t), jets.xi.polynomial(t).ravel(),
                             jets.omega.polynomial(t)])
    # truncation error is O(t^8)
    np.testing.assert_allclose(approx, ref, atol=1e-12)


def test_kalman_jet_first_derivative_is_riccati_rhs(sys2d, kalman, linear_feedback):
    xi0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    jets = ode_jet(sys2d, kalman, linear_feedback, None, _state([0.5, 0.5], [0.1, 0.0], xi=xi0), 2)
    Au = sys2d.A_u(-1.0)
    np.testing.assert_allclose(jets.xi[1], observer_rhs(kalman, xi0, Au, sys2d.C), atol=1e-12)


def test_nfot_first_order(sys2d, luenberger, linear_feedback):
    probe = nfot_probe(sys2d, luenberger, linear_feedback, None, _state([1, 0], [0, 0]))
    assert probe.order == 1 and not probe.inconclusive


def test_nfot_flat_at_target(sys2d, luenberger, linear_feedback):
    probe = nfot_probe(sys2d, luenberger, linear_feedback, None, _state([0, 0], [0, 0]))
    assert probe.inconclusive


def test_main_eq_second_order(sys2d, luenberger, linear_feedback):
    # C w = 0 and C w' = 0 for w0 = e2 at u = -1; C w'' = u'(0) = 2
    probe = main_eq_check(sys2d, luenberger, linear_feedback, None, _state([1, 0], [0, 0], omega=[0, 1]))
    assert probe.order == 2
    assert probe.magnitudes[2] == pytest.approx(2.0)


def test_main_eq_flat_for_singular_constant_input(sys2d, luenberger):
    probe = main_eq_check(sys2d, luenberger, None, None, _state([1, 0], [0, 0], omega=[0, 1]), frozen_input=-1.0)
    assert probe.inconclusive
    assert probe.kmax == default_kmax(2)


def test_main_eq_requires_unit_direction(sys2d, luenberger):
    with pytest.raises(ValueError):
        main_eq_check(sys2d, luenberger, None, None, _state([1, 0], [0, 0], omega=[0, 2]))


def test_ode_jet_dimension_check(sys2d, luenberger):
    with pytest.raises(DimensionError):
        ode_jet(sys2d, luenberger, None, None, CoupledState([1, 0, 0], [0, 0, 0], np.eye(3), [0, 0, 0]), 2)


def test_symbolic_and_numeric_agree_along_coupled_jet(sys2d, kalman, linear_feedback):
    init = _state([0.7, -0.2], [0.1, 0.3], omega=[0.6, 0.8])
    jets = ode_jet(sys2d, kalman, linear_feedback, None, init, 6)
    for k in range(7):
        for m in range(2):
            sym = f_symbolic(sys2d.A, sys2d.B, sys2d.C, m, k, jets.u.coefficients, init.omega)
            assert f_numeric(sys2d, m, jets, init.omega, k) == pytest.approx(sym, rel=1e-10, abs=1e-12)


def test_jet_taylor_round_trip():
    j = Jet((1.0, 2.0, 6.0))
    assert [float(c) for c in j.taylor()] == [1.0, 2.0, 3.0]
    np.testing.assert_allclose(Jet.from_taylor(j.taylor()).coefficients, j.coefficients)
    assert j.polynomial(1.0) == pytest.approx(1 + 2 + 6 / factorial(2))
