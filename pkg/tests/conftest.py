import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from obsv.fields import PolynomialField
from obsv.observers import ObserverSpec
from obsv.systems import BilinearSystem

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def sys2d():
    """Double integrator, cross-coupled input matrix, first coordinate measured."""
    return BilinearSystem([[0, 1], [0, 0]], [[0, 1], [1, 0]], [[1, 0]], [0, 1])


@pytest.fixture
def linear_feedback():
    return PolynomialField.linear([-1.0, -1.0])


@pytest.fixture
def kalman():
    return ObserverSpec("kalman", np.eye(2), np.eye(2))


@pytest.fixture
def luenberger():
    return ObserverSpec("luenberger", None, np.eye(2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
