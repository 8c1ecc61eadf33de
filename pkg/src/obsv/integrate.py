"""Adaptive Dormand-Prince 5(4) integration with dense output.

Written out here (rather than delegated to ``scipy.integrate``) because the
observer runs need two hooks a black-box solver does not offer: a per-step
acceptance test that can reject and halve a step (positive definiteness of
the Riccati state), and a projection applied to every accepted state
(symmetrization).
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, IntegrationError, SPDLossError

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th order solution and the embedded 4th order one
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension (Shampine), coefficients of theta, theta^2, theta^3, theta^4
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class DenseSolution:
    """Piecewise quartic interpolant through the accepted steps.

    Attributes
    ----------
    t : ndarray, shape (N,)
        Step end points, increasing.
    y : ndarray, shape (N, d)
        States at ``t``.
    Q : ndarray, shape (N-1, d, 4)
        Per-step interpolation coefficients.
    events : list of str
        Step rejections caused by the acceptance hook, blow-ups, etc.
    """

    t: np.ndarray
    y: np.ndarray
    Q: np.ndarray
    events: list = field(default_factory=list)
    nfev: int = 0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        idx = np.clip(np.searchsorted(self.t, tt, side="right") - 1, 0, len(self.t) - 2)
        out = np.empty((tt.size, self.y.shape[1]))
        for j, (i, ti) in enumerate(zip(idx, tt)):
            h = self.t[i + 1] - self.t[i]
            theta = (ti - self.t[i]) / h
            p = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
            out[j] = self.y[i] + h * (self.Q[i] @ p)
        return out[0] if scalar else out

    @property
    def t_final(self):
        return float(self.t[-1])


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def _initial_step(fun, t0, y0, f0, rtol, atol, span):
    scale = atol + np.abs(y0) * rtol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def solve(fun, t_span, y0, rtol=1e-9, atol=1e-12, max_step=np.inf, accept=None, project=None,
          blowup=None, max_halvings=30, max_steps=1_000_000, first_step=None):
    """Integrate ``y' = fun(t, y)`` over ``t_span``.

    Parameters
    ----------
    fun : callable
        ``fun(t, y) -> ndarray``.
    t_span : (float, float)
    y0 : array_like
    rtol, atol : float
        Local error tolerances.
    accept : callable, optional
        ``accept(t, y) -> bool`` evaluated on every candidate step that passed
        the error test; ``False`` rejects the step and halves ``h``.
        ``max_halvings`` consecutive such rejections raise :class:`SPDLossError`.
    project : callable, optional
        Applied to each accepted state before it is stored.
    blowup : float, optional
        Abort with :class:`BlowUpError` once ``max|y|`` exceeds this bound.

    Returns
    -------
    DenseSolution
    """
    t0, tf = map(float, t_span)
    if not tf > t0:
        raise ValueError("t_span must be increasing")
    y = np.array(y0, dtype=float).reshape(-1)
    if project is not None:
        y = project(y)
    f = np.asarray(fun(t0, y), dtype=float)
    nfev = 1
    span = tf - t0
    h = first_step if first_step is not None else _initial_step(fun, t0, y, f, rtol, atol, span)
    nfev += 1
    h = min(h, max_step)
    ts, ys, Qs, events = [t0], [y.copy()], [], []
    t = t0
    halvings = 0
    hook_rejected = False
    K = np.empty((7, y.size))
    steps = 0
    while t < tf:
        steps += 1
        if steps > max_steps:
            raise IntegrationError(f"too many steps ({max_steps})")
        h = min(h, tf - t, max_step)
        if tf - (t + h) <= 1e-12 * span:
            # never leave a sliver that the next step could not resolve
            h = tf - t
        if h <= 1e-14 * max(1.0, abs(t)):
            if hook_rejected:
                raise SPDLossError(f"acceptance test drives the step size to zero at t={t:.6g}")
            raise IntegrationError(f"step size underflow at t={t}")
        K[0] = f
        for s in range(1, 6):
            K[s] = fun(t + _C[s] * h, y + h * (_A[s] @ K[:s]))
        y_new = y + h * (_B @ K[:6])
        f_new = np.asarray(fun(t + h, y_new), dtype=float)
        K[6] = f_new
        nfev += 6
        if not np.all(np.isfinite(y_new)):
            err = np.inf
        else:
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _rms(h * (_E @ K) / scale)
        if err > 1.0:
            hook_rejected = False
            h *= max(0.2, 0.9 * err ** (-1 / 5)) if np.isfinite(err) else 0.2
            continue
        if accept is not None and not accept(t + h, y_new):
            halvings += 1
            hook_rejected = True
            events.append(f"rejected step at t={t + h:.6g} by acceptance test")
            if halvings > max_halvings:
                raise SPDLossError(f"acceptance test failed after {max_halvings} halvings at t={t:.6g}")
            h *= 0.5
            continue
        halvings = 0
        Qs.append(K.T @ _P)
        t_new = tf if h == tf - t else t + h
        if project is not None:
            y_new = project(y_new)
            f_new = np.asarray(fun(t_new, y_new), dtype=float)
            nfev += 1
        t, y, f = t_new, y_new, f_new
        ts.append(t)
        ys.append(y.copy())
        if blowup is not None and np.max(np.abs(y)) > blowup:
            events.append(f"blow-up at t={t:.6g}")
            partial = DenseSolution(np.array(ts), np.array(ys), np.array(Qs), events, nfev)
            raise BlowUpError(f"state norm exceeded {blowup:g} at t={t:.6g}", t=t, partial=partial)
        factor = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** (-1 / 5))
        h *= max(0.2, factor)
    return DenseSolution(np.array(ts), np.array(ys), np.array(Qs), events, nfev)
