"""Time-domain simulation of the closed loop, observability Gramians and near-target bounds.

The integrated state is ``(xhat, eps, xi, omega)`` with the input
``u = (lambda + delta)(xhat)``. The fundamental matrix ``Phi`` of
``w' = A_u w`` and the Gramian ``W(t) = int_0^t Phi^T C^T C Phi`` are
co-integrated so that every trajectory carries its own observability test.
"""
import csv
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import linalg, optimize

from . import config
from .errors import BlowUpError, HypothesisNotMet
from .fields import PolynomialField, SumField, ZeroField
from .integrate import solve
from .jets import main_eq_check
from .parallel import ordered_map
from .state import CoupledState, require_spd
from .systems import is_observable_pair, observability_matrix

__all__ = [
    "CoupledState", "Trajectory", "GramianReport", "integrate_coupled", "gramian", "eta0",
    "deviation_bound", "near_target_radius", "observability_verdict", "write_trajectory_csv",
]


def _input_field(feedback, delta, n):
    g = feedback if feedback is not None else ZeroField(n)
    if delta is not None:
        g = g + delta
    return g


class _Layout:
    """Offsets of the blocks in the flat integration vector."""

    def __init__(self, n):
        self.n = n
        nn = n * n
        self.xhat = slice(0, n)
        self.eps = slice(n, 2 * n)
        self.xi = slice(2 * n, 2 * n + nn)
        self.omega = slice(2 * n + nn, 3 * n + nn)
        self.phi = slice(3 * n + nn, 3 * n + 2 * nn)
        self.W = slice(3 * n + 2 * nn, 3 * n + 3 * nn)
        self.size = 3 * n + 3 * nn


@dataclass(frozen=True)
class GramianReport:
    """Observability Gramian ``W(T)`` and its verdict.

    ``observable`` iff ``lambda_min > tol_obs`` with
    ``tol_obs = OBS_REL_TOL * trace(W) / n``.
    """

    W: np.ndarray
    eigenvalues: np.ndarray
    lambda_min: float
    tol_obs: float
    observable: bool
    Phi: np.ndarray
    T: float

    @property
    def margin(self):
        """``lambda_min / (trace(W) / n)``; compare with ``OBS_REL_TOL``."""
        scale = float(np.trace(self.W)) / self.W.shape[0]
        return self.lambda_min / scale if scale > 0 else 0.0

    @property
    def weakest_direction(self):
        w, V = np.linalg.eigh(self.W)
        return V[:, 0]


def _gramian_report(W, Phi, T, rel_tol=None):
    rel_tol = config.OBS_REL_TOL if rel_tol is None else rel_tol
    W = 0.5 * (W + W.T)
    ev = np.linalg.eigvalsh(W)
    n = W.shape[0]
    tol = rel_tol * float(np.trace(W)) / n
    return GramianReport(W, ev, float(ev[0]), tol, bool(ev[0] > tol), Phi, float(T))


@dataclass(frozen=True)
class Trajectory:
    """Dense-output solution of the coupled system on ``[0, T]``."""

    solution: object
    n: int
    T: float
    input_field: object
    C: np.ndarray
    events: tuple = field(default=())

    @property
    def t(self):
        return self.solution.t

    def _y(self, t):
        return self.solution(t)

    def state(self, t):
        y = self._y(t)
        L = _Layout(self.n)
        xi = y[..., L.xi].reshape(np.shape(t) + (self.n, self.n))
        return y[..., L.xhat], y[..., L.eps], xi, y[..., L.omega]

    def xhat(self, t):
        return self._y(t)[..., _Layout(self.n).xhat]

    def u(self, t):
        x = self.xhat(t)
        return self.input_field.value(x)

    def u_trace(self):
        return lambda t: float(self.u(t))

    def gramian_at(self, t):
        L = _Layout(self.n)
        y = self._y(t)
        return y[..., L.W].reshape(np.shape(t) + (self.n, self.n))

    def gramian_report(self, rel_tol=None):
        L = _Layout(self.n)
        y = self.solution.y[-1]
        return _gramian_report(y[L.W].reshape(self.n, self.n), y[L.phi].reshape(self.n, self.n), self.T, rel_tol)

    def max_xhat_norm(self, samples=401):
        ts = np.linspace(0.0, self.T, samples)
        return float(np.max(np.linalg.norm(self.xhat(ts), axis=1)))


def _coupled_rhs(sys, spec, g):
    n = sys.n
    L = _Layout(n)
    A, B, C, b = sys.A, sys.B, sys.C, sys.b
    CtC = C.T @ C
    kalman = spec.is_kalman
    Q = spec.Q

    def f(t, y):
        x = y[L.xhat]
        e = y[L.eps]
        xi = y[L.xi].reshape(n, n)
        w = y[L.omega]
        Phi = y[L.phi].reshape(n, n)
        u = float(g.value(x))
        Au = A + u * B
        corr = xi @ (CtC @ e)
        out = np.empty_like(y)
        out[L.xhat] = Au @ x + b * u - corr
        out[L.eps] = Au @ e - corr
        if kalman:
            M = xi @ Au.T + Au @ xi + Q - xi @ CtC @ xi
            out[L.xi] = (0.5 * (M + M.T)).ravel()
        else:
            out[L.xi] = 0.0
        out[L.omega] = Au @ w
        out[L.phi] = (Au @ Phi).ravel()
        CP = C @ Phi
        out[L.W] = (CP.T @ CP).ravel()
        return out

    return f


def _hooks(n):
    L = _Layout(n)

    def accept(t, y):
        xi = y[L.xi].reshape(n, n)
        try:
            np.linalg.cholesky(0.5 * (xi + xi.T))
        except np.linalg.LinAlgError:
            return False
        return True

    def project(y):
        y = y.copy()
        for sl in (L.xi, L.W):
            M = y[sl].reshape(n, n)
            y[sl] = (0.5 * (M + M.T)).ravel()
        return y

    return accept, project


def integrate_coupled(sys, spec, feedback, delta, initial, T, rtol=1e-10, atol=1e-12, blowup=None):
    """Integrate the coupled system on ``[0, T]``.

    Parameters
    ----------
    sys : BilinearSystem
    spec : ObserverSpec
    feedback, delta : SmoothField or None
    initial : CoupledState
    T : float
    blowup : float, optional
        State-norm bound (default ``config.BLOWUP_BOUND``).

    Returns
    -------
    Trajectory

    Raises
    ------
    BlowUpError
        The state norm exceeded the bound (forward completeness fails numerically).
    SPDLossError
        The observer matrix could not be kept positive definite.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    n = sys.n
    g = _input_field(feedback, delta, n)
    if feedback is not None and abs(float(feedback.value(np.zeros(n)))) > 1e-14:
        raise HypothesisNotMet("feedback must vanish at the origin")
    require_spd(initial.xi)
    L = _Layout(n)
    y0 = np.zeros(L.size)
    y0[L.xhat] = initial.xhat
    y0[L.eps] = initial.eps
    y0[L.xi] = initial.xi.ravel()
    y0[L.omega] = initial.omega
    y0[L.phi] = np.eye(n).ravel()
    accept, project = _hooks(n)
    bound = config.BLOWUP_BOUND if blowup is None else blowup
    sol = solve(_coupled_rhs(sys, spec, g), (0.0, T), y0, rtol=rtol, atol=atol,
                accept=accept, project=project, blowup=bound)
    return Trajectory(sol, n, float(T), g, sys.C, tuple(sol.events))


def _as_input(u_trace):
    if isinstance(u_trace, Trajectory):
        return u_trace.u_trace()
    if callable(u_trace):
        return u_trace
    c = float(u_trace)
    return lambda t: c


def flow(sys, u_trace, T, rtol=1e-11, atol=1e-14):
    """Dense solution of ``Phi' = A_u Phi, W' = Phi^T C^T C Phi`` with ``Phi(0) = I, W(0) = 0``."""
    n = sys.n
    u = _as_input(u_trace)
    A, B, C = sys.A, sys.B, sys.C

    def f(t, y):
        Phi = y[: n * n].reshape(n, n)
        Au = A + u(t) * B
        CP = C @ Phi
        return np.concatenate([(Au @ Phi).ravel(), (CP.T @ CP).ravel()])

    def project(y):
        y = y.copy()
        M = y[n * n:].reshape(n, n)
        y[n * n:] = (0.5 * (M + M.T)).ravel()
        return y

    y0 = np.concatenate([np.eye(n).ravel(), np.zeros(n * n)])
    return solve(f, (0.0, T), y0, rtol=rtol, atol=atol, project=project)


def gramian(sys, u_trace, T, rtol=1e-11, atol=1e-14, rel_tol=None):
    """Observability Gramian along an input.

    Parameters
    ----------
    u_trace : float, callable or Trajectory
        Constant input, ``t -> u(t)``, or the input along a trajectory.

    Returns
    -------
    GramianReport
    """
    sol = flow(sys, u_trace, T, rtol, atol)
    n = sys.n
    y = sol.y[-1]
    return _gramian_report(y[n * n:].reshape(n, n), y[: n * n].reshape(n, n), T, rel_tol)


# sphere sampling -------------------------------------------------------------

def sphere_points(n, resolution):
    """Deterministic points on the unit sphere of R^n, up to sign.

    n = 2: equally spaced half circle; n = 3: Fibonacci points on the upper
    hemisphere; otherwise a product grid of hyperspherical angles.
    """
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        th = np.pi * np.arange(resolution) / resolution
        return np.column_stack([np.cos(th), np.sin(th)])
    if n == 3:
        k = np.arange(resolution) + 0.5
        z = k / resolution
        phi = np.pi * (1 + 5 ** 0.5) * k
        r = np.sqrt(1 - z * z)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    m = max(2, int(round(resolution ** (1.0 / (n - 1)))))
    angs = [np.pi * (np.arange(m) + 0.5) / m] * (n - 2) + [np.pi * np.arange(m) / m]
    pts = []
    for a in product(*angs):
        x = np.empty(n)
        s = 1.0
        for i, t in enumerate(a):
            x[i] = s * np.cos(t)
            s *= np.sin(t)
        x[-1] = s
        pts.append(x)
    return np.array(pts)


def _free_output_rows(sys, T, nt):
    ts = np.linspace(0.0, T, nt)
    return np.array([sys.C @ linalg.expm(sys.A * t) for t in ts])


@dataclass(frozen=True)
class Eta0Report:
    value: float
    direction: np.ndarray
    samples: int
    time_grid: int


def eta0_report(sys, T, sphere_resolution=64, time_grid=201):
    """``min over |w| = 1 of max over t in [0, T] of |C exp(At) w|`` with its minimizer.

    The sphere sample is augmented with the unobservable directions of
    ``(C, A)`` and refined by Nelder-Mead from the worst sample. The time
    maximum is over a uniform grid, so the value never exceeds the exact one.
    """
    rows = _free_output_rows(sys, T, time_grid)          # (nt, m, n)

    def objective(w):
        w = np.asarray(w, dtype=float)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return np.inf
        return float(np.max(np.linalg.norm(rows @ (w / nw), axis=1)))

    pts = list(sphere_points(sys.n, sphere_resolution))
    O = observability_matrix(sys.C, sys.A)
    _, s, Vt = linalg.svd(O.rows)
    pts.extend(Vt[O.rank:])
    vals = [objective(p) for p in pts]
    best = int(np.argmin(vals))
    w0 = np.asarray(pts[best])
    res = optimize.minimize(objective, w0, method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    if res.fun < vals[best]:
        w = res.x / np.linalg.norm(res.x)
        val = float(res.fun)
    else:
        w, val = w0 / np.linalg.norm(w0), float(vals[best])
    return Eta0Report(val, w, len(pts), time_grid)


def eta0(sys, T, sphere_resolution=64, time_grid=201):
    """Min over directions of the max over time of the free output; positive iff ``(C, A)`` is observable."""
    return eta0_report(sys, T, sphere_resolution, time_grid).value


# bounds ------------------------------------------------------------------------

def _sup_on_interval(fun, T, samples):
    ts = np.linspace(0.0, T, samples)
    vals = np.array([fun(t) for t in ts])
    i = int(np.argmax(vals))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, samples - 1)]
    best = float(vals[i])
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -fun(t), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        best = max(best, float(-res.fun))
    return best


def free_flow_bound(sys, T, samples=201):
    """``M = sup_{t in [0, T]} ||exp(At)||`` (spectral norm)."""
    return _sup_on_interval(lambda t: float(np.linalg.norm(linalg.expm(sys.A * t), 2)), T, samples)


@dataclass(frozen=True)
class DeviationReport:
    lhs: float
    rhs: float
    M: float
    K: float
    u_M: float
    slack: float = 0.0

    @property
    def holds(self):
        """``lhs <= rhs`` up to ``slack``, the integration error allowed in the measured side."""
        return self.lhs <= self.rhs + self.slack


def growth_bound(M, K, u):
    """``M K u exp(K u)``."""
    with np.errstate(over="ignore"):
        return M * K * u * np.exp(K * u)


def deviation_bound(sys, T, u_trace, samples=201):
    """Measured ``max_t ||Phi_u(t) - exp(At)||`` against ``M K u_M exp(K u_M)``, ``K = M ||B|| T``.

    The left side is the spectral norm, i.e. the exact maximum over unit
    initial directions, taken over a time grid.
    """
    u = _as_input(u_trace)
    M = free_flow_bound(sys, T, samples)
    u_M = _sup_on_interval(lambda t: abs(float(u(t))), T, samples)
    K = M * float(np.linalg.norm(sys.B, 2)) * T
    sol = flow(sys, u, T)
    n = sys.n
    lhs = 0.0
    for t in np.linspace(0.0, T, samples):
        Phi = sol(t)[: n * n].reshape(n, n)
        lhs = max(lhs, float(np.linalg.norm(Phi - linalg.expm(sys.A * t), 2)))
    # the flow is integrated at rtol 1e-11; allow that much error in the measured side
    return DeviationReport(lhs, float(growth_bound(M, K, u_M)), M, K, u_M, 1e-9 * M)


def sup_abs_on_ball(field, R, resolution=41):
    """Upper estimate of ``sup_{|x| <= R} |g(x)|``.

    Polynomials get the rigorous bound ``sum |c_beta| R^|beta|``; other
    fields are sampled on a tensor grid of the ball.
    """
    if isinstance(field, ZeroField):
        return 0.0
    if isinstance(field, PolynomialField):
        return float(sum(abs(c) * R ** sum(e) for e, c in field.coefficients.items()))
    if isinstance(field, SumField) and all(isinstance(p, (PolynomialField, ZeroField)) for p in field.parts):
        return float(sum(sup_abs_on_ball(p, R) for p in field.parts))
    n = field.n
    axes = [np.linspace(-R, R, resolution)] * n
    pts = np.array(list(product(*axes)))
    pts = pts[np.linalg.norm(pts, axis=1) <= R]
    return float(np.max(np.abs(field.value(pts))))


@dataclass(frozen=True)
class NearTargetReport:
    R: float
    eta1: float
    eta0: float
    M: float
    K: float
    eta_star: float
    u_M: float
    C_norm: float


def _solve_increasing(fun, target, hi=1.0, iters=200):
    """Largest ``x`` with ``fun(x) < target`` for increasing ``fun`` with ``fun(0) = 0``."""
    while fun(hi) < target:
        hi *= 2.0
        if hi > 1e12:
            return hi
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fun(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


def near_target_radius(sys, feedback, T, region=None, sphere_resolution=64, time_grid=201,
                       R_max=None, iters=60):
    """Radius ``R`` and perturbation budget ``eta1`` certifying observability near the target.

    ``eta1`` is half the root ``eta*`` of ``|C| M K eta exp(K eta) = eta0``;
    ``R`` is then the largest radius (bisection) with
    ``|C| M K (u_M(R) + eta1) exp(K (u_M(R) + eta1)) < eta0``, where
    ``u_M(R)`` bounds ``|lambda|`` on ``B(0, R)``. With a region given,
    ``R`` is also capped so that ``B(0, R)`` lies inside it.

    Raises
    ------
    HypothesisNotMet
        If ``(C, A)`` is not observable (then ``eta0 = 0``).
    """
    if not is_observable_pair(sys.C, sys.A):
        raise HypothesisNotMet("(C, A) is not observable; eta0 = 0")
    e0 = eta0(sys, T, sphere_resolution, time_grid)
    M = free_flow_bound(sys, T, time_grid)
    K = M * float(np.linalg.norm(sys.B, 2)) * T
    cn = float(np.linalg.norm(sys.C, 2))

    def g(eta):
        return cn * growth_bound(M, K, eta)

    eta_star = _solve_increasing(g, e0)
    eta1 = 0.5 * eta_star
    cap = R_max
    if region is not None:
        cap = region.inner_radius() if cap is None else min(cap, region.inner_radius())
        if cap <= 0:
            raise HypothesisNotMet("the origin is not interior to the region")
    if cap is None:
        cap = 1e6
    fb = feedback if feedback is not None else ZeroField(sys.n)

    def ok(R):
        return g(sup_abs_on_ball(fb, R) + eta1) < e0

    if ok(cap):
        R = cap
    else:
        lo, hi = 0.0, cap
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        R = lo
    return NearTargetReport(float(R), float(eta1), float(e0), float(M), float(K), float(eta_star),
                            float(sup_abs_on_ball(fb, R)), cn)


# verdicts ----------------------------------------------------------------------

@dataclass(frozen=True)
class PointVerdict:
    index: int
    lambda_min: float
    tol_obs: float
    margin: float
    observable: bool
    k0: int | None
    blowup: bool
    events: tuple


@dataclass(frozen=True)
class VerdictReport:
    points: tuple
    T: float

    @property
    def worst_margin(self):
        return min(p.margin for p in self.points)

    @property
    def worst_lambda_min(self):
        return min(p.lambda_min for p in self.points)

    @property
    def max_k0(self):
        ks = [p.k0 for p in self.points if p.k0 is not None]
        return max(ks) if ks else None

    @property
    def observable(self):
        return all(p.observable for p in self.points)


def _verdict_one(sys, spec, feedback, delta, T, kmax, rtol, atol, with_jets, item):
    idx, init = item
    try:
        traj = integrate_coupled(sys, spec, feedback, delta, init, T, rtol=rtol, atol=atol)
    except BlowUpError as exc:
        return PointVerdict(idx, 0.0, 0.0, 0.0, False, None, True, (str(exc),))
    rep = traj.gramian_report()
    k0 = None
    if with_jets:
        w0 = init.omega
        if abs(np.linalg.norm(w0) - 1.0) > 1e-9:
            w0 = rep.weakest_direction
        probe_state = CoupledState(init.xhat, init.eps, init.xi, w0)
        k0 = main_eq_check(sys, spec, feedback, delta, probe_state, kmax=kmax).order
    return PointVerdict(idx, rep.lambda_min, rep.tol_obs, rep.margin, rep.observable, k0, False, traj.events)


def observability_verdict(sys, spec, feedback, delta, initial_grid, T, kmax=None, threads=None,
                          rtol=1e-10, atol=1e-12, with_jets=True):
    """Gramian verdict and first output-derivative order for each initial condition.

    Initial conditions whose ``omega`` is not a unit vector use the weakest
    Gramian direction for the derivative test.
    """
    grid = list(initial_grid)
    if not grid:
        raise ValueError("the initial-condition grid is empty")

    def one(item):
        return _verdict_one(sys, spec, feedback, delta, T, kmax, rtol, atol, with_jets, item)

    points = ordered_map(one, list(enumerate(grid)), threads)
    return VerdictReport(tuple(points), float(T))


# export ------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def trajectory_rows(traj, samples=101):
    """Header and rows ``t, xhat_i, eps_i, |eps|, u, Cw, lambda_min(W(t))`` on a uniform grid."""
    n = traj.n
    m = traj.C.shape[0]
    head = ["t"] + [f"xhat_{i + 1}" for i in range(n)] + [f"eps_{i + 1}" for i in range(n)] + ["eps_norm", "u"]
    head += ["Cw"] if m == 1 else [f"Cw_{j + 1}" for j in range(m)]
    head += ["lambda_min_W"]
    rows = []
    for t in np.linspace(0.0, traj.T, samples):
        x, e, _, w = traj.state(t)
        W = traj.gramian_at(t)
        lam = float(np.linalg.eigvalsh(0.5 * (W + W.T))[0])
        row = [t, *x, *e, np.linalg.norm(e), traj.input_field.value(x), *(traj.C @ w), lam]
        rows.append([_fmt(v) for v in row])
    return head, rows


def write_trajectory_csv(traj, path, samples=101):
    head, rows = trajectory_rows(traj, samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        w.writerows(rows)
