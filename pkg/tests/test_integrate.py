import numpy as np
import pytest
from scipy.integrate import solve_ivp

from obsv.errors import BlowUpError, SPDLossError
from obsv.integrate import solve


def test_exponential_decay_closed_form():
    sol = solve(lambda t, y: -y, (0.0, 3.0), [1.0], rtol=1e-11, atol=1e-14)
    ts = np.linspace(0, 3, 31)
    np.testing.assert_allclose(sol(ts)[:, 0], np.exp(-ts), rtol=1e-9)


def test_matches_scipy_dop853_on_van_der_pol():
    def f(t, y):
        return np.array([y[1], 2.0 * (1 - y[0] ** 2) * y[1] - y[0]])

    ours = solve(f, (0.0, 10.0), [2.0, 0.0], rtol=1e-10, atol=1e-12)
    ref = solve_ivp(f, (0.0, 10.0), [2.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    ts = np.linspace(0, 10, 101)
    np.testing.assert_allclose(ours(ts), ref.sol(ts).T, atol=1e-7)


def test_dense_output_between_steps():
    # harmonic oscillator; dense interpolant must stay accurate between accepted points
    sol = solve(lambda t, y: np.array([y[1], -y[0]]), (0.0, 2 * np.pi), [1.0, 0.0], rtol=1e-10, atol=1e-13)
    ts = np.linspace(0.0, 2 * np.pi, 997)
    np.testing.assert_allclose(sol(ts)[:, 0], np.cos(ts), atol=1e-8)
    assert sol.t_final == pytest.approx(2 * np.pi)


def test_blowup_reports_time_and_partial():
    with pytest.raises(BlowUpError) as info:
        solve(lambda t, y: y * y, (0.0, 2.0), [1.0], blowup=1e6)
    assert 0.9 < info.value.t < 1.0
    assert info.value.partial is not None


def test_accept_hook_rejection_exhausts():
    with pytest.raises(SPDLossError):
        solve(lambda t, y: -np.ones_like(y), (0.0, 2.0), [1.0], accept=lambda t, y: y[0] > 0.5)


def test_project_hook_is_applied():
    sol = solve(lambda t, y: np.array([1.0, -1.0]), (0.0, 1.0), [0.0, 0.0], project=lambda y: np.abs(y))
    assert np.all(sol.y >= 0)


def test_rejects_empty_span():
    with pytest.raises(ValueError):
        solve(lambda t, y: y, (1.0, 1.0), [1.0])
