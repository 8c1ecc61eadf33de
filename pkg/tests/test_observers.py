import numpy as np
import pytest
from hypothesis import given, strategies as st

from obsv.errors import HypothesisNotMet, NotSPDError
from obsv.fields import PolynomialField
from obsv.observers import (ObserverSpec, check_h1, check_h2, check_h3, closed_loop_field, find_equilibria,
                            frozen_equilibrium_probe, gain, no_new_equilibrium_eta, observer_rhs, random_invertible,
                            random_spd, random_structured_pair)
from obsv.regions import Box

A2 = np.array([[0.0, 1.0], [0.0, 0.0]])
C2 = np.array([[1.0, 0.0]])
LUENBERGER_STABLE = ObserverSpec("luenberger", None, [[2.0, 1.0], [1.0, 2.0]])


def test_spec_validation():
    with pytest.raises(ValueError):
        ObserverSpec("particle", None, np.eye(2))
    with pytest.raises(ValueError):
        ObserverSpec("kalman", None, np.eye(2))
    with pytest.raises(NotSPDError):
        ObserverSpec("kalman", -np.eye(2), np.eye(2))


def test_luenberger_matrix_is_frozen(luenberger):
    assert not np.any(observer_rhs(luenberger, np.eye(2), A2, C2))


def test_riccati_rhs_by_hand(kalman):
    # xi = I: A^T + A + I - C^T C
    expected = A2.T + A2 + np.eye(2) - C2.T @ C2
    np.testing.assert_allclose(observer_rhs(kalman, np.eye(2), A2, C2), expected)


def test_gain_is_xi_times_output_transpose():
    xi = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(gain(xi, C2), [[2.0], [0.5]])


def test_rhs_rejects_asymmetric(kalman):
    with pytest.raises(NotSPDError):
        observer_rhs(kalman, np.array([[1.0, 0.5], [0.0, 1.0]]), A2, C2)


def _h1_samples(rng, n, k, count):
    out = []
    for _ in range(count):
        A, C = random_structured_pair(rng, n, k)
        out.append((random_spd(rng, n), A, C))
    return out


@pytest.mark.parametrize("kind", ["kalman", "luenberger"])
def test_h1_covariance_and_blocks(kind, rng):
    n, k = 3, 2
    spec = ObserverSpec(kind, random_spd(rng, n) if kind == "kalman" else None, random_spd(rng, n))
    T = random_invertible(rng, n)
    rep = check_h1(spec, T, _h1_samples(rng, n, k, 20), k=k)
    assert rep.samples == 20
    assert rep.passed(1e-10), rep


def test_h1_detects_wrong_transformation_rule(rng):
    # an observer whose weight does not transform with T breaks covariance
    spec = ObserverSpec("kalman", np.eye(3), np.eye(3))
    T = random_invertible(rng, 3) * 2.0

    class Frozen(ObserverSpec):
        def transformed(self, T):
            return self

    broken = Frozen("kalman", np.eye(3), np.eye(3))
    assert check_h1(spec, T, _h1_samples(rng, 3, 2, 5)).covariance_residual < 1e-10
    assert check_h1(broken, T, _h1_samples(rng, 3, 2, 5)).covariance_residual > 1e-3


def test_h1_requires_block_structure(kalman, rng):
    with pytest.raises(ValueError):
        check_h1(kalman, np.eye(2), [(np.eye(2), np.ones((2, 2)), C2)], k=1)


@pytest.mark.parametrize("spec", [ObserverSpec("kalman", np.eye(2), np.eye(2)), LUENBERGER_STABLE])
def test_h2_correction_decays(spec):
    rep = check_h2(spec, A2, C2, [0.0, 1.0], [([1, 0], [0.5, -0.3]), ([0, 0], [1, 1])], horizon=25.0)
    assert rep.passed, rep.final_correction
    assert all(r < 0 for r in rep.decay_rates)


def test_h2_rejects_unobservable_block(kalman):
    with pytest.raises(HypothesisNotMet):
        check_h2(kalman, np.diag([1.0, 2.0]), C2, [0, 0], [([0, 0], [1, 1])], 1.0)


@given(st.integers(1, 4), st.integers(0, 2 ** 31))
def test_h3_injective_on_output_range(n, seed):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((1, n))
    samples = [random_spd(rng, n) for _ in range(5)]
    rep = check_h3(samples, C)
    assert rep.passed
    assert all(s >= lo * (1 - 1e-12) for s, lo in zip(rep.restricted_sigma_min, rep.lower_bounds))


def test_frozen_probe_constant_estimate(sys2d, kalman, luenberger):
    # u = -1 keeps xhat = (-1, s) at rest when C eps = 0; eps = (0, e) is then invariant
    for spec in (kalman, luenberger):
        rep = frozen_equilibrium_probe(sys2d, spec, -1.0, [-1.0, 0.3], [0.0, 0.5], np.eye(2), 10.0)
        assert rep.applicable and rep.holds
        assert rep.max_correction <= 1e-8


def test_frozen_probe_not_applicable_when_estimate_moves(sys2d, kalman):
    rep = frozen_equilibrium_probe(sys2d, kalman, 0.0, [1.0, 1.0], [0.1, 0.0], np.eye(2), 1.0)
    assert not rep.applicable and rep.holds


def test_closed_loop_field_and_equilibria(sys2d, linear_feedback):
    np.testing.assert_allclose(closed_loop_field(sys2d, linear_feedback, [[0.0, 0.0]]), [[0.0, 0.0]])
    eq = find_equilibria(sys2d, linear_feedback, Box([-2, -2], [2, 2]), resolution=41)
    assert any(np.linalg.norm(x) < 1e-8 for x in eq)


def test_equilibrium_budget(sys2d):
    # u = -x1 - 2 x2 also has the equilibrium (-1, 1): the budget collapses on a box containing it
    fb = PolynomialField.linear([-1.0, -2.0])
    small = no_new_equilibrium_eta(sys2d, fb, Box([-0.5, -0.5], [0.5, 0.5]), 0.1, resolution=41)
    assert small.eta > 0 and small.C1 > 0 and small.C2 > 0
    big = no_new_equilibrium_eta(sys2d, fb, Box([-1, -1], [1, 1]), 0.1, resolution=41)
    assert big.C1 == pytest.approx(0.0, abs=1e-12)
