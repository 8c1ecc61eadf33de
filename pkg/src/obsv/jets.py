"""Jets at ``t = 0`` of the coupled plant/observer/direction system.

Everything is propagated in normalized Taylor coefficients ``c_j = y^(j)(0) / j!``
(products are then plain Cauchy products) and converted to derivatives on
output. The input ``u = g(xhat)`` with ``g = lambda + delta`` is expanded by
composing the multivariate Taylor series of ``g`` at ``xhat(0)`` with the
series of ``xhat(t) - xhat(0)``.
"""
from dataclasses import dataclass
from math import factorial

import numpy as np

from . import config
from .errors import DimensionError
from .fields import SmoothField, ZeroField, alpha_factorial, check_feedback
from .state import CoupledState


@dataclass(frozen=True)
class Jet:
    """Derivatives ``d^0, ..., d^k`` at ``t = 0`` (scalars, vectors or matrices)."""

    coefficients: tuple

    def __post_init__(self):
        coefs = tuple(np.asarray(c, dtype=float) for c in self.coefficients)
        if not coefs:
            raise ValueError("a jet needs at least the value")
        for c in coefs:
            if not np.all(np.isfinite(c)):
                raise ValueError("jet has non-finite entries")
        object.__setattr__(self, "coefficients", coefs)

    @property
    def order(self):
        return len(self.coefficients) - 1

    def __getitem__(self, j):
        return self.coefficients[j]

    def __len__(self):
        return len(self.coefficients)

    def taylor(self):
        """Normalized coefficients ``d^j / j!``."""
        return [c / factorial(j) for j, c in enumerate(self.coefficients)]

    @classmethod
    def from_taylor(cls, coefs):
        return cls(tuple(np.asarray(c) * factorial(j) for j, c in enumerate(coefs)))

    def polynomial(self, t):
        """Value of the truncated Taylor polynomial at ``t``."""
        out = 0.0
        for j, c in enumerate(self.coefficients):
            out = out + c * (t ** j / factorial(j))
        return out


def _cauchy(a, b, j):
    """Degree-``j`` coefficient of the product of two series (scalar left factor)."""
    return sum(a[i] * b[j - i] for i in range(j + 1))


def _series_power_table(h, order):
    """``pw[i][p]`` = series coefficients of ``h_i(t)^p`` for ``p <= order``; ``h`` has shape (order+1, n)."""
    n = h.shape[1]
    table = []
    for i in range(n):
        one = np.zeros(order + 1)
        one[0] = 1.0
        pows = [one]
        for _ in range(order):
            prev = pows[-1]
            nxt = np.zeros(order + 1)
            for d in range(order + 1):
                nxt[d] = sum(prev[a] * h[d - a, i] for a in range(d + 1))
            pows.append(nxt)
        table.append(pows)
    return table


def _compose_taylor(field_taylor, path_taylor, order):
    """Series coefficients of ``g(x(t))`` from Taylor data of ``g`` at ``x(0)`` and of ``x``."""
    path = np.asarray(path_taylor, dtype=float)
    h = path.copy()
    h[0] = 0.0
    pw = _series_power_table(h, order)
    out = np.zeros(order + 1)
    for alpha, c in field_taylor.items():
        if sum(alpha) > order:
            continue
        term = np.zeros(order + 1)
        term[0] = 1.0
        for i, p in enumerate(alpha):
            if p:
                t2 = np.zeros(order + 1)
                for d in range(order + 1):
                    t2[d] = sum(term[a] * pw[i][p][d - a] for a in range(d + 1))
                term = t2
        out += float(c) * term
    return out


@dataclass(frozen=True)
class FieldJet:
    """Mixed partials ``d^alpha g(x0)`` for ``|alpha| <= order`` (absent keys are zero)."""

    order: int
    partials: dict

    @classmethod
    def of(cls, field, x0, order):
        return cls(order, field.partials(np.asarray(x0, dtype=float), order))


def faa_di_bruno(field_jet, path_jet):
    """Jet of ``g(x(t))`` at ``t = 0``.

    Parameters
    ----------
    field_jet : FieldJet or dict
        Mixed partials of ``g`` at ``x(0)``. A bare dict is read as a field
        jet of the path's order.
    path_jet : Jet
        Derivatives ``x^(j)(0)``, ``j = 0..k``, as vectors.

    Returns
    -------
    Jet
        Scalar derivatives of the composition up to order ``k``.
    """
    k = path_jet.order
    if not isinstance(field_jet, FieldJet):
        field_jet = FieldJet(k, dict(field_jet))
    if field_jet.order != k or any(sum(a) > k for a in field_jet.partials):
        raise ValueError(f"field jet has order {field_jet.order} but the path jet has order {k}")
    taylor = {a: c / alpha_factorial(a) for a, c in field_jet.partials.items()}
    series = _compose_taylor(taylor, np.array(path_jet.taylor()), k)
    return Jet.from_taylor(series)


@dataclass(frozen=True)
class CoupledJets:
    """Jets of the coupled system and of the input along it."""

    xhat: Jet
    eps: Jet
    xi: Jet
    omega: Jet
    u: Jet

    @property
    def order(self):
        return self.xhat.order


def _feedback_field(feedback, delta, n):
    g = feedback if feedback is not None else ZeroField(n)
    if delta is not None:
        g = g + delta
    return g


def ode_jet(sys, spec, feedback, delta, initial, order, frozen_input=None):
    """Taylor jets at ``t = 0`` of ``(xhat, eps, xi, omega)`` and of ``u = (lambda + delta)(xhat)``.

    Parameters
    ----------
    sys : BilinearSystem
    spec : ObserverSpec
    feedback, delta : SmoothField or None
        ``None`` stands for the zero field.
    initial : CoupledState
    order : int
    frozen_input : float, optional
        Replace the feedback by this constant input.

    Returns
    -------
    CoupledJets
    """
    if not isinstance(initial, CoupledState):
        raise TypeError("initial must be a CoupledState")
    n = sys.n
    if initial.n != n:
        raise DimensionError(f"state has dimension {initial.n}, system has {n}")
    g = _feedback_field(feedback, delta, n)
    if frozen_input is None:
        g._check_order(order)
        g_taylor = g.taylor(initial.xhat, order)
    A, B, C, b = sys.A, sys.B, sys.C, sys.b
    CtC = C.T @ C
    kalman = spec.is_kalman
    Q = spec.Q if kalman else None

    X = [initial.xhat.copy()]
    E = [initial.eps.copy()]
    XI = [initial.xi.copy()]
    W = [initial.omega.copy()]
    U = []
    for j in range(order + 1):
        if frozen_input is None:
            U.append(_compose_taylor(g_taylor, np.array(X), j)[j])
        else:
            U.append(float(frozen_input) if j == 0 else 0.0)
        if j == order:
            break
        UX = _cauchy(U, X, j)
        UE = _cauchy(U, E, j)
        UW = _cauchy(U, W, j)
        corr = sum(XI[i] @ CtC @ E[j - i] for i in range(j + 1))
        X.append((A @ X[j] + B @ UX + b * U[j] - corr) / (j + 1))
        E.append((A @ E[j] + B @ UE - corr) / (j + 1))
        W.append((A @ W[j] + B @ UW) / (j + 1))
        if kalman:
            UXI = _cauchy(U, XI, j)
            quad = sum(XI[i] @ CtC @ XI[j - i] for i in range(j + 1))
            M = XI[j] @ A.T + UXI @ B.T + A @ XI[j] + B @ UXI - quad
            if j == 0:
                M = M + Q
            XI.append(0.5 * (M + M.T) / (j + 1))
        else:
            XI.append(np.zeros((n, n)))
    return CoupledJets(Jet.from_taylor(X), Jet.from_taylor(E), Jet.from_taylor(XI),
                       Jet.from_taylor(W), Jet.from_taylor(U))


def omega_jet(sys, u_jet, omega0, order):
    """Jet of ``w' = (A + u(t) B) w`` with ``w(0) = omega0`` for a given input jet.

    ``u_jet`` holds derivatives ``u(0), u'(0), ...``; entries beyond its
    length are read as zero.
    """
    v = np.asarray(u_jet.coefficients if isinstance(u_jet, Jet) else u_jet, dtype=float).reshape(-1)
    U = [v[i] / factorial(i) if i < v.size else 0.0 for i in range(order + 1)]
    W = [np.asarray(omega0, dtype=float).reshape(-1)]
    for j in range(order):
        W.append((sys.A @ W[j] + sys.B @ _cauchy(U, W, j)) / (j + 1))
    return Jet.from_taylor(W)


def f_numeric(sys, m, u_jet_source, omega0, k):
    """``C B^m omega^(k)(0)`` from propagated jets.

    ``u_jet_source`` is either a :class:`CoupledJets` (the direction jet is
    read off directly) or an input jet ``(u(0), u'(0), ...)``.
    """
    if isinstance(u_jet_source, CoupledJets):
        if u_jet_source.order < k:
            raise ValueError(f"jets only reach order {u_jet_source.order}")
        wk = u_jet_source.omega[k]
    else:
        wk = omega_jet(sys, u_jet_source, omega0, k)[k]
    val = sys.C @ np.linalg.matrix_power(sys.B, m) @ wk
    return float(val[0]) if val.size == 1 else val


@dataclass(frozen=True)
class OrderProbe:
    """First order at which a jet leaves zero, or inconclusive up to ``kmax``."""

    order: int | None
    kmax: int
    tol: float
    magnitudes: tuple

    @property
    def inconclusive(self):
        return self.order is None


def _first_nonzero(mags, start, tol, kmax):
    for k in range(start, kmax + 1):
        if mags[k] > tol:
            return k
    return None


def default_kmax(n):
    return 2 * n + 4


def nfot_probe(sys, spec, feedback, delta, initial, kmax=None, tol=None):
    """Smallest ``k >= 1`` with ``xhat^(k)(0) != 0``.

    The default threshold is ``JET_REL_TOL`` times the largest entry seen in
    the estimate and error jets. ``order is None`` means flat up to ``kmax``.
    """
    kmax = default_kmax(sys.n) if kmax is None else kmax
    jets = ode_jet(sys, spec, feedback, delta, initial, kmax)
    mags = tuple(float(np.linalg.norm(c)) for c in jets.xhat.coefficients)
    if tol is None:
        seen = max(max(mags), max(float(np.linalg.norm(c)) for c in jets.eps.coefficients))
        tol = config.JET_REL_TOL * seen
    return OrderProbe(_first_nonzero(mags, 1, tol, kmax), kmax, float(tol), mags)


def main_eq_check(sys, spec, feedback, delta, initial, kmax=None, tol=None, frozen_input=None):
    """First order ``k0`` with ``d^k0/dt^k0 (C omega)(0) != 0``.

    ``initial.omega`` must have unit norm. The default threshold is
    ``JET_REL_TOL`` times the largest ``|C omega^(k)(0)|`` and ``|omega^(k)(0)|`` seen,
    with an absolute floor of ``JET_REL_TOL`` (the direction has unit size).
    """
    if abs(float(np.linalg.norm(initial.omega)) - 1.0) > 1e-9:
        raise ValueError("omega0 must lie on the unit sphere")
    kmax = default_kmax(sys.n) if kmax is None else kmax
    jets = ode_jet(sys, spec, feedback, delta, initial, kmax, frozen_input=frozen_input)
    mags = tuple(float(np.linalg.norm(sys.C @ w)) for w in jets.omega.coefficients)
    if tol is None:
        seen = max(1.0, max(float(np.linalg.norm(w)) for w in jets.omega.coefficients))
        tol = config.JET_REL_TOL * seen
    return OrderProbe(_first_nonzero(mags, 0, tol, kmax), kmax, float(tol), mags)


def as_feedback(field):
    """Validate a field used as the feedback law (it must vanish at the origin)."""
    if not isinstance(field, SmoothField):
        raise TypeError("feedback must be a SmoothField")
    return check_feedback(field)
