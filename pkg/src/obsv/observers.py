"""Luenberger and Kalman observers and checks of the hypotheses they must satisfy.

Both observers use the gain ``L(xi) = xi C^T``. The Luenberger observer keeps
``xi`` frozen (its vector field is zero); the Kalman observer moves ``xi``
along the Riccati flow ``xi A_u^T + A_u xi + Q - xi C^T C xi``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from . import config
from .errors import DimensionError, HypothesisNotMet, NotSPDError
from .integrate import solve
from .regions import grid_points
from .state import require_spd
from .systems import is_observable_pair

LUENBERGER = "luenberger"
KALMAN = "kalman"


@dataclass(frozen=True)
class ObserverSpec:
    """Observer family and its parameters.

    Parameters
    ----------
    kind : {"luenberger", "kalman"}
    Q : array_like, optional
        Symmetric positive definite weight of the Kalman observer.
    xi0 : array_like, optional
        Default initial observer matrix (the fixed gain matrix for Luenberger).
    """

    kind: str
    Q: np.ndarray = None
    xi0: np.ndarray = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in (LUENBERGER, KALMAN):
            raise ValueError(f"unknown observer kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == KALMAN:
            if self.Q is None:
                raise ValueError("the Kalman observer needs Q")
            object.__setattr__(self, "Q", require_spd(self.Q, "Q"))
        elif self.Q is not None:
            object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        if self.xi0 is not None:
            object.__setattr__(self, "xi0", require_spd(self.xi0, "xi0"))

    @property
    def is_kalman(self):
        return self.kind == KALMAN

    def rhs(self, xi, A_u, C):
        return observer_rhs(self, xi, A_u, C)

    def transformed(self, T):
        """The same observer in coordinates ``x -> T x`` (Kalman weight ``T Q T^T``)."""
        T = np.asarray(T, dtype=float)
        Q = None if self.Q is None else T @ self.Q @ T.T
        xi0 = None if self.xi0 is None else T @ self.xi0 @ T.T
        return ObserverSpec(self.kind, Q, xi0)

    def leading_block(self, k):
        """Observer of the same family acting on the first ``k`` coordinates."""
        Q = None if self.Q is None else self.Q[:k, :k]
        xi0 = None if self.xi0 is None else self.xi0[:k, :k]
        return ObserverSpec(self.kind, Q, xi0)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.Q is not None:
            d["Q"] = self.Q.tolist()
        if self.xi0 is not None:
            d["xi0"] = self.xi0.tolist()
        return d


def _symmetric_or_raise(xi, tol=1e-8):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 2 or xi.shape[0] != xi.shape[1]:
        raise DimensionError(f"xi must be square, got {xi.shape}")
    scale = max(1.0, float(np.max(np.abs(xi))))
    if np.max(np.abs(xi - xi.T)) > tol * scale:
        raise NotSPDError("xi is not symmetric")
    return xi


def observer_rhs(spec, xi, A_u, C):
    """Time derivative of the observer matrix.

    Luenberger: zero. Kalman: ``xi A_u^T + A_u xi + Q - xi C^T C xi``,
    symmetrized before returning.
    """
    xi = _symmetric_or_raise(xi)
    if not spec.is_kalman:
        return np.zeros_like(xi)
    A_u = np.asarray(A_u, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    M = xi @ A_u.T + A_u @ xi + spec.Q - xi @ C.T @ C @ xi
    return 0.5 * (M + M.T)


def gain(xi, C):
    """Observer gain ``xi C^T`` (n x m)."""
    xi = np.asarray(xi, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != xi.shape[0]:
        raise DimensionError(f"C has {C.shape[1]} columns but xi is {xi.shape}")
    return xi @ C.T


# (H1) ------------------------------------------------------------------------

@dataclass
class H1Report:
    covariance_residual: float
    gain_residual: float
    block_residual: float
    block_gain_residual: float
    samples: int

    @property
    def max_residual(self):
        return max(self.covariance_residual, self.gain_residual, self.block_residual, self.block_gain_residual)

    def passed(self, tol=1e-10):
        return self.max_residual <= tol


def _rel(a, b):
    return float(np.max(np.abs(a - b), initial=0.0)) / max(1.0, float(np.max(np.abs(a), initial=0.0)),
                                                           float(np.max(np.abs(b), initial=0.0)))


def check_h1(spec, T, samples, k=None):
    """Transformation covariance and block compatibility of the observer.

    Parameters
    ----------
    spec : ObserverSpec
    T : array_like
        Invertible change of coordinates.
    samples : iterable of (xi, A_bar, C_bar)
        ``xi`` SPD. When ``k`` is given, ``(A_bar, C_bar)`` must have the
        block structure ``A_bar[:k, k:] = 0``, ``C_bar[:, k:] = 0``.
    k : int, optional
        Size of the observable block for the compatibility check.

    Returns
    -------
    H1Report
        Largest relative residuals over the samples.
    """
    T = np.asarray(T, dtype=float)
    Tinv = np.linalg.inv(T)
    moved = spec.transformed(T)
    cov = gres = blk = bg = 0.0
    count = 0
    for xi, A_bar, C_bar in samples:
        xi = require_spd(xi)
        A_bar = np.asarray(A_bar, dtype=float)
        C_bar = np.atleast_2d(np.asarray(C_bar, dtype=float))
        count += 1
        lhs = observer_rhs(moved, T @ xi @ T.T, T @ A_bar @ Tinv, C_bar @ Tinv)
        rhs = T @ observer_rhs(spec, xi, A_bar, C_bar) @ T.T
        cov = max(cov, _rel(lhs, rhs))
        gres = max(gres, _rel(gain(T @ xi @ T.T, C_bar @ Tinv), T @ gain(xi, C_bar)))
        if k is not None:
            if np.any(A_bar[:k, k:]) or np.any(C_bar[:, k:]):
                raise ValueError("(A_bar, C_bar) lacks the block structure for the given k")
            full = observer_rhs(spec, xi, A_bar, C_bar)[:k, :k]
            reduced = observer_rhs(spec.leading_block(k), xi[:k, :k], A_bar[:k, :k], C_bar[:, :k])
            blk = max(blk, _rel(full, reduced))
            bg = max(bg, _rel(gain(xi, C_bar)[:k], gain(xi[:k, :k], C_bar[:, :k])))
    return H1Report(cov, gres, blk, bg, count)


def random_spd(rng, n, cond=10.0):
    """Random SPD matrix with eigenvalues in ``[1, cond]``."""
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = rng.uniform(1.0, cond, size=n)
    M = Qm @ np.diag(ev) @ Qm.T
    return 0.5 * (M + M.T)


def random_structured_pair(rng, n, k, m=1):
    """Random ``(A_bar, C_bar)`` with ``A_bar[:k, k:] = 0`` and ``C_bar[:, k:] = 0``."""
    A = rng.standard_normal((n, n))
    A[:k, k:] = 0.0
    C = np.zeros((m, n))
    C[:, :k] = rng.standard_normal((m, k))
    return A, C


def random_invertible(rng, n, min_sv=0.3):
    while True:
        T = rng.standard_normal((n, n))
        if linalg.svdvals(T)[-1] >= min_sv:
            return T


# (H2) ------------------------------------------------------------------------

@dataclass
class H2Report:
    final_correction: list
    horizon: float
    tol: float
    decay_rates: list
    sampling: str

    @property
    def worst(self):
        return max(self.final_correction, default=0.0)

    @property
    def passed(self):
        return self.worst < self.tol


def _reduced_rhs(spec, A, C, b):
    n = A.shape[0]

    def f(t, y):
        x, e = y[:n], y[n:2 * n]
        xi = y[2 * n:].reshape(n, n)
        corr = gain(xi, C) @ (C @ e)
        dxi = observer_rhs(spec, 0.5 * (xi + xi.T), A, C)
        return np.concatenate([A @ x + b - corr, A @ e - corr, dxi.ravel()])

    return f


def _spd_hooks(n, offset):
    def accept(t, y):
        xi = y[offset:offset + n * n].reshape(n, n)
        try:
            np.linalg.cholesky(0.5 * (xi + xi.T))
        except np.linalg.LinAlgError:
            return False
        return True

    def project(y):
        y = y.copy()
        xi = y[offset:offset + n * n].reshape(n, n)
        y[offset:offset + n * n] = (0.5 * (xi + xi.T)).ravel()
        return y

    return accept, project


def check_h2(spec, A11, C1, b1, initial, horizon, tol=1e-6, xi0=None, rtol=1e-10, atol=1e-13):
    """Convergence of the correction term ``L_1(xi_11) C_1 eps_1`` of the reduced observer.

    Parameters
    ----------
    initial : iterable of (xhat1, eps1)
        Sampled initial conditions; convergence for all initial conditions
        cannot be checked, only for these.
    horizon : float
        Time at which the correction term is measured.
    xi0 : array_like, optional
        Initial observer matrix (default: the observer's ``xi0``, else identity).

    Raises
    ------
    HypothesisNotMet
        If ``(C1, A11)`` is not observable.
    """
    A11 = np.atleast_2d(np.asarray(A11, dtype=float))
    C1 = np.atleast_2d(np.asarray(C1, dtype=float))
    b1 = np.asarray(b1, dtype=float).reshape(-1)
    k = A11.shape[0]
    if not is_observable_pair(C1, A11):
        raise HypothesisNotMet("(C1, A11) is not observable")
    if xi0 is None:
        xi0 = spec.xi0[:k, :k] if spec.xi0 is not None else np.eye(k)
    xi0 = require_spd(xi0)
    f = _reduced_rhs(spec, A11, C1, b1)
    accept, project = _spd_hooks(k, 2 * k)
    finals, rates = [], []
    count = 0
    for x1, e1 in initial:
        count += 1
        y0 = np.concatenate([np.asarray(x1, float).reshape(-1), np.asarray(e1, float).reshape(-1), xi0.ravel()])
        sol = solve(f, (0.0, horizon), y0, rtol=rtol, atol=atol, accept=accept, project=project)
        ts = np.linspace(0.0, horizon, 201)
        ys = sol(ts)
        corr = np.array([np.linalg.norm(gain(y[2 * k:].reshape(k, k), C1) @ (C1 @ y[k:2 * k])) for y in ys])
        finals.append(float(corr[-1]))
        # late-time exponential rate from a log-linear fit where the signal is resolvable
        mask = (ts >= 0.5 * horizon) & (corr > 1e-14)
        rates.append(float(np.polyfit(ts[mask], np.log(corr[mask]), 1)[0]) if mask.sum() >= 5 else float("nan"))
    return H2Report(finals, float(horizon), float(tol), rates, f"{count} sampled initial conditions")


# (H3) ------------------------------------------------------------------------

@dataclass
class H3Report:
    restricted_sigma_min: list
    lower_bounds: list
    margin: float

    @property
    def passed(self):
        return all(s > self.margin for s in self.restricted_sigma_min)


def check_h3(xi11_samples, C1, margin=None):
    """Injectivity of ``L_1(xi_11) = xi_11 C_1^T`` on ``Im C_1``.

    For each SPD sample, the smallest singular value of ``xi_11 C_1^T U`` is
    reported, ``U`` an orthonormal basis of ``Im C_1``, together with the lower
    bound ``lambda_min(xi_11) * sigma_min(C_1^T U)``.
    """
    C1 = np.atleast_2d(np.asarray(C1, dtype=float))
    U = linalg.orth(C1)
    base = linalg.svdvals(C1.T @ U) if U.size else np.array([])
    sig, low = [], []
    for xi in xi11_samples:
        xi = require_spd(xi)
        if U.size == 0:
            # Im C1 = {0}: the condition holds vacuously
            sig.append(np.inf)
            low.append(np.inf)
            continue
        sig.append(float(linalg.svdvals(xi @ C1.T @ U)[-1]))
        low.append(float(np.linalg.eigvalsh(0.5 * (xi + xi.T))[0] * base[-1]))
    if margin is None:
        margin = config.RANK_RTOL * max(1.0, float(np.max(np.abs(C1))))
    return H3Report(sig, low, float(margin))


# equilibrium probes ----------------------------------------------------------

@dataclass
class FrozenProbeReport:
    applicable: bool
    max_xhat_speed: float
    max_correction: float
    tol: float
    note: str

    @property
    def holds(self):
        return (not self.applicable) or self.max_correction <= self.tol


def frozen_equilibrium_probe(sys, spec, u0, xhat0, eps0, xi0, horizon, tol=1e-8, samples=401,
                             rtol=1e-11, atol=1e-14):
    """Observer under the constant input ``u0``: if the estimate stays put, the correction must vanish.

    Integrates ``(xhat, eps, xi)`` with ``u = u0`` and measures
    ``max |dxhat/dt|`` and ``max |L(xi) C eps|`` on a uniform grid of
    ``[0, horizon]``. When the estimate is not constant (speed above ``tol``)
    the statement is vacuous and the report says so.
    """
    A0 = sys.A_u(u0)
    b0 = sys.b * u0
    C = sys.C
    n = sys.n
    f = _reduced_rhs(spec, A0, C, b0)
    accept, project = _spd_hooks(n, 2 * n)
    y0 = np.concatenate([np.asarray(xhat0, float), np.asarray(eps0, float), require_spd(xi0).ravel()])
    sol = solve(f, (0.0, horizon), y0, rtol=rtol, atol=atol, accept=accept, project=project)
    speed = corr = 0.0
    for t in np.linspace(0.0, horizon, samples):
        y = sol(t)
        dy = f(t, y)
        speed = max(speed, float(np.linalg.norm(dy[:n])))
        xi = y[2 * n:].reshape(n, n)
        corr = max(corr, float(np.linalg.norm(gain(xi, C) @ (C @ y[n:2 * n]))))
    applicable = speed <= tol
    note = "estimate constant; correction term checked" if applicable else "estimate moves; not applicable"
    return FrozenProbeReport(applicable, speed, corr, float(tol), note)


def closed_loop_field(sys, feedback, x):
    """``F_mu(x) = A_{mu(x)} x + b mu(x)`` at points ``x`` of shape (N, n)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_1d(feedback.value(x))
    return x @ sys.A.T + u[:, None] * (x @ sys.B.T) + u[:, None] * sys.b[None, :]


@dataclass
class EquilibriumBound:
    eta: float
    C1: float
    C2: float
    grid_points: int
    resolution: int


def no_new_equilibrium_eta(sys, feedback, region, R, resolution=81):
    """Sup-norm budget below which a perturbation vanishing on ``B(0, R)`` adds no equilibrium in the region.

    ``eta = C1 / C2`` with ``C1 = min |F_lambda|`` over the region outside
    ``B(0, R)`` and ``C2 = max |B x + b|`` over the region, both on a tensor
    grid with ``resolution`` points per axis.
    """
    pts = grid_points(region, resolution)
    outside = pts[np.linalg.norm(pts, axis=1) >= R]
    if outside.size == 0:
        raise ValueError("region has no grid points outside B(0, R)")
    c1 = float(np.min(np.linalg.norm(closed_loop_field(sys, feedback, outside), axis=1)))
    c2 = float(np.max(np.linalg.norm(pts @ sys.B.T + sys.b, axis=1)))
    return EquilibriumBound(c1 / c2 if c2 > 0 else np.inf, c1, c2, len(pts), resolution)


def find_equilibria(sys, feedback, region, resolution=81, tol=1e-8):
    """Zeros of ``F_mu`` in the region: grid local minima of ``|F_mu|`` refined by a root solve."""
    lo, hi = region.bounding_box()
    axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    flat = mesh.reshape(-1, sys.n)
    mag = np.linalg.norm(closed_loop_field(sys, feedback, flat), axis=1).reshape(mesh.shape[:-1])
    found = []
    it = np.nditer(mag, flags=["multi_index"])
    for val in it:
        idx = it.multi_index
        nb = [mag[tuple(np.clip(np.array(idx) + d, 0, resolution - 1))]
              for d in np.vstack([np.eye(sys.n, dtype=int), -np.eye(sys.n, dtype=int)])]
        if val > min(nb):
            continue
        x0 = mesh[idx]
        res = optimize.root(lambda x: closed_loop_field(sys, feedback, x)[0], x0, tol=1e-14)
        x = res.x
        if not res.success or np.linalg.norm(closed_loop_field(sys, feedback, x)[0]) > tol:
            continue
        if not region.contains(x):
            continue
        if all(np.linalg.norm(x - y) > 1e-6 for y in found):
            found.append(x)
    return found
