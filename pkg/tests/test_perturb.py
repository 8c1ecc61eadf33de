import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from obsv.errors import HypothesisNotMet, InfeasibleGeometry
from obsv.perturb import (Atom, BumpPerturbation, candidate_seeds, dumps_delta, loads_delta, norm_k_K,
                          sample_candidate, search_delta)
from obsv.regions import Box
from obsv.state import CoupledState
from obsv.systems import BilinearSystem

REGION = Box([-2.5, -2.5], [2.5, 2.5])


def _bump():
    return BumpPerturbation(2, [Atom([1.0, 0.5], 0.8, 0.3), Atom([-1.5, -1.0], 1.0, -0.2)])


def test_bump_closed_form_value():
    d = BumpPerturbation(2, [Atom([0.0, 0.0], 2.0, 1.5)])
    # |x|^2 / r^2 = 0.25 at x = (1, 0)
    assert d.value(np.array([1.0, 0.0])) == pytest.approx(1.5 * np.exp(-1 / 0.75))
    assert d.value(np.array([2.0, 0.0])) == 0.0


@given(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5))
def test_bump_gradient_and_hessian_match_finite_differences(x, y):
    d = _bump()
    p = np.array([x, y])
    part = d.partials(p, 2)
    h = 1e-5
    for i, e in enumerate([(1, 0), (0, 1)]):
        step = h * np.eye(2)[i]
        fd = (d.value(p + step) - d.value(p - step)) / (2 * h)
        assert part[e] == pytest.approx(fd, abs=1e-7)
    fd_xy = (d.value(p + [h, h]) - d.value(p + [h, -h]) - d.value(p + [-h, h]) + d.value(p + [-h, -h])) / (4 * h * h)
    assert part[(1, 1)] == pytest.approx(fd_xy, abs=1e-4)


def test_vectorized_taylor_matches_pointwise():
    d = _bump()
    pts = np.array([[0.5, 0.2], [1.1, 0.4], [-1.2, -0.9]])
    many = d.taylor(pts, 3)
    for j, p in enumerate(pts):
        one = d.taylor(p, 3)
        for a in one:
            assert many[a][j] == pytest.approx(one[a], abs=1e-14)


def test_vanishing_on_target_ball():
    d = _bump()
    R = 0.1
    assert d.vanishes_on_ball(R)
    th = np.linspace(0, 2 * np.pi, 50)
    pts = np.column_stack([R * np.cos(th), R * np.sin(th)])
    assert not np.any(d.value(pts))


def test_json_round_trip_is_exact():
    d = _bump()
    back = loads_delta(dumps_delta(d))
    assert back == d
    assert dumps_delta(back) == dumps_delta(d)


def test_empty_perturbation_needs_dimension():
    with pytest.raises(ValueError):
        loads_delta('{"atoms": []}')
    assert loads_delta('{"atoms": []}', n=2).is_zero


def test_sample_candidate_norm_and_support():
    R, eta = 0.05, 0.5
    d = sample_candidate(123, R, REGION, eta, 2)
    assert d.vanishes_on_ball(R)
    assert norm_k_K(d, 2, REGION).value == pytest.approx(0.9 * eta, rel=1e-12)
    assert sample_candidate(123, R, REGION, eta, 2) == d


def test_sample_candidate_infeasible():
    with pytest.raises(InfeasibleGeometry):
        sample_candidate(0, 10.0, REGION, 0.5, 2, max_tries=200)


def test_candidate_seeds_are_prefix_stable():
    assert candidate_seeds(7, 5) == candidate_seeds(7, 10)[:5]


def _flagship():
    from obsv.fields import PolynomialField
    from obsv.observers import ObserverSpec
    sys = BilinearSystem([[0, 1], [0, 0]], [[0, 1], [1, 0]], [[1, 0]], [0, 1])
    fb = PolynomialField(2, {(1, 0): -1, (0, 1): -1, (2, 0): -0.75, (1, 1): -0.5})
    spec = ObserverSpec("kalman", np.eye(2), np.eye(2))
    grid = [CoupledState([-2.0, s], e, np.eye(2), [0, 0]) for s in (-1.0, 0.0, 0.5) for e in ([0, 0], [0, 0.5])]
    grid.append(CoupledState([1.0, 1.0], [0.2, -0.1], np.eye(2), [0, 0]))
    return sys, spec, fb, grid


def test_search_restores_observability():
    sys, spec, fb, grid = _flagship()
    res = search_delta(sys, spec, fb, grid, 2.0, 0.03, REGION, 0.5, 2, budget=30, seed=7)
    assert res.accepted
    assert res.trace[0].margin < 1e-8
    assert res.margin >= 1e-8
    assert res.delta.vanishes_on_ball(0.03)
    assert norm_k_K(res.delta, 2, REGION).value <= 0.5


def test_search_budget_exhaustion_returns_best():
    sys, spec, fb, grid = _flagship()
    res = search_delta(sys, spec, fb, grid[:1], 2.0, 0.03, REGION, 0.5, 2, budget=1, seed=7)
    assert not res.accepted and res.tried == 1 and res.delta.is_zero


def test_search_requires_interior_origin():
    sys, spec, fb, grid = _flagship()
    with pytest.raises(HypothesisNotMet):
        search_delta(sys, spec, fb, grid, 2.0, 0.03, Box([0.1, 0.1], [1, 1]), 0.5, 2, budget=2, seed=0)


def test_search_warns_on_unobservable_input_pair():
    sys, spec, fb, grid = _flagship()
    b0 = BilinearSystem(sys.A, np.zeros((2, 2)), sys.C, sys.b)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = search_delta(b0, spec, fb, grid[-1:], 1.0, 0.03, REGION, 0.5, 2, budget=1, seed=0)
    assert any("(C, B)" in str(w.message) for w in caught)
    assert res.warnings == ["(C, B) is not observable"]
