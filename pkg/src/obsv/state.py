"""State of the plant/observer/direction system."""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotSPDError


def require_spd(M, name="xi", sym_tol=1e-9):
    """Return ``M`` as a float array after checking it is symmetric positive definite."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    if np.max(np.abs(M - M.T), initial=0.0) > sym_tol * scale:
        raise NotSPDError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        raise NotSPDError(f"{name} is not positive definite") from None
    return M


@dataclass(frozen=True)
class CoupledState:
    """``(xhat, eps, xi, omega)``: estimate, estimation error, observer matrix, direction.

    ``eps = xhat - x``. ``xi`` must be symmetric positive definite. ``omega``
    is not renormalized; only its initial value is meant to lie on the unit
    sphere.
    """

    xhat: np.ndarray
    eps: np.ndarray
    xi: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        xhat = np.asarray(self.xhat, dtype=float).reshape(-1)
        n = xhat.size
        eps = np.asarray(self.eps, dtype=float).reshape(-1)
        omega = np.asarray(self.omega, dtype=float).reshape(-1)
        if eps.size != n or omega.size != n:
            raise DimensionError("xhat, eps and omega must have equal length")
        xi = require_spd(self.xi)
        if xi.shape != (n, n):
            raise DimensionError(f"xi must be {n}x{n}, got {xi.shape}")
        for name, val in (("xhat", xhat), ("eps", eps), ("xi", xi), ("omega", omega)):
            if not np.all(np.isfinite(val)):
                raise ValueError(f"{name} has non-finite entries")
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self):
        return self.xhat.size

    def pack(self):
        return np.concatenate([self.xhat, self.eps, self.xi.ravel(), self.omega])

    @classmethod
    def unpack(cls, y, n, check=True):
        y = np.asarray(y, dtype=float)
        xhat, eps = y[:n], y[n:2 * n]
        xi = y[2 * n:2 * n + n * n].reshape(n, n)
        omega = y[2 * n + n * n:]
        if check:
            return cls(xhat, eps, xi, omega)
        return xhat, eps, xi, omega
