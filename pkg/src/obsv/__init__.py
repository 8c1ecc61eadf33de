"""Observability of bilinear systems under observer-based output feedback.

The main entry points are re-exported here; see the submodules for the rest.
"""
from .errors import (BlowUpError, DimensionError, HypothesisNotMet, IdentityViolation, NotSPDError, ObsvError,
                     OrderCapError, SPDLossError, UnobservableForAllInputs)
from .fields import PolynomialField
from .matpoly import MatPoly, p_sequence, psi
from .observers import ObserverSpec
from .perturb import BumpPerturbation, search_delta
from .simulate import (deviation_bound, eta0, gramian, integrate_coupled, near_target_radius,
                       observability_verdict)
from .state import CoupledState
from .systems import BilinearSystem, kalman_decomposition, observability_matrix, singular_input_scan

__version__ = "0.1.0"

__all__ = [
    "BilinearSystem", "BlowUpError", "BumpPerturbation", "CoupledState", "DimensionError", "HypothesisNotMet",
    "IdentityViolation", "MatPoly", "NotSPDError", "ObserverSpec", "ObsvError", "OrderCapError",
    "PolynomialField", "SPDLossError", "UnobservableForAllInputs", "deviation_bound", "eta0", "gramian",
    "integrate_coupled", "kalman_decomposition", "near_target_radius", "observability_matrix",
    "observability_verdict", "p_sequence", "psi", "search_delta", "singular_input_scan",
]
