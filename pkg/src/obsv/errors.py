"""Exception types raised by the toolkit."""


class ObsvError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(ObsvError, ValueError):
    """Matrix or vector shapes are inconsistent."""


class NotSPDError(ObsvError, ValueError):
    """A matrix that must be symmetric positive definite is not."""


class OrderCapError(ObsvError, ValueError):
    """A requested derivative or recurrence order exceeds a configured cap."""


class IdentityViolation(ObsvError, AssertionError):
    """An algebraic identity that must hold exactly failed.

    This signals an implementation bug rather than bad input data.
    """


class HypothesisNotMet(ObsvError, ValueError):
    """The precondition of a structural check does not hold."""


class BudgetExhausted(ObsvError, RuntimeError):
    """A bounded search ran out of budget."""


class UnobservableForAllInputs(ObsvError, ValueError):
    """The observability determinant vanishes for every constant input."""


class InfeasibleGeometry(ObsvError, ValueError):
    """No room to place perturbation atoms in the requested region."""


class IntegrationError(ObsvError, RuntimeError):
    """The adaptive integrator could not proceed."""


class BlowUpError(IntegrationError):
    """The state norm exceeded the configured blow-up bound.

    Attributes
    ----------
    t : float
        Time at which the bound was exceeded.
    partial : object
        Whatever was integrated before the abort (a dense solution).
    """

    def __init__(self, message, t=None, partial=None):
        super().__init__(message)
        self.t = t
        self.partial = partial


class SPDLossError(IntegrationError):
    """The observer matrix lost positive definiteness and step halving did not recover it."""
