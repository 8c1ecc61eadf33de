"""Scalar fields on R^n with exact partial derivatives.

Derivatives are produced as truncated multivariate Taylor expansions
``g(x0 + h) = sum_alpha c_alpha h^alpha`` with ``c_alpha = d^alpha g(x0) / alpha!``.
Coefficients may be scalars or arrays (one entry per evaluation point), so
a whole grid is expanded in one pass.
"""
from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb, factorial

import numpy as np

from .errors import DimensionError, OrderCapError, HypothesisNotMet
from . import config


@lru_cache(maxsize=None)
def multi_indices(n, order):
    """All exponent tuples of length ``n`` with total degree ``<= order``, graded."""
    out = []
    for d in range(order + 1):
        for combo in combinations_with_replacement(range(n), d):
            e = [0] * n
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return tuple(out)


def alpha_factorial(alpha):
    f = 1
    for a in alpha:
        f *= factorial(a)
    return f


# truncated multivariate series: dict exponent -> coefficient -----------------

def ts_add(a, b):
    out = dict(a)
    for e, c in b.items():
        out[e] = out[e] + c if e in out else c
    return out


def ts_scale(a, s):
    return {e: s * c for e, c in a.items()}


def ts_mul(a, b, order):
    out = {}
    for e1, c1 in a.items():
        d1 = sum(e1)
        for e2, c2 in b.items():
            if d1 + sum(e2) > order:
                continue
            e = tuple(x + y for x, y in zip(e1, e2))
            p = c1 * c2
            out[e] = out[e] + p if e in out else p
    return out


def compose_univariate(derivs, inner, order):
    """Series of ``f(s0 + inner(h))`` where ``inner`` has no constant term.

    ``derivs[j]`` is ``f^(j)(s0)`` (scalar or array). This is the
    multivariate Faa di Bruno formula written in Taylor coefficients.
    """
    n = len(next(iter(inner))) if inner else 0
    out = {(0,) * n: derivs[0]}
    power = {(0,) * n: 1.0}
    for j in range(1, order + 1):
        power = ts_mul(power, inner, order)
        if not power:
            break
        out = ts_add(out, ts_scale(power, derivs[j] / factorial(j)))
    return out


# bump profile -----------------------------------------------------------------

@lru_cache(maxsize=None)
def _profile_polys(order):
    """Integer polynomials p_j(w) with psi^(j)(s) = p_j(w) exp(-w), w = 1/(1-s)."""
    polys = [np.array([1], dtype=object)]
    for _ in range(order):
        p = polys[-1]
        dp = np.array([i * p[i] for i in range(1, len(p))] or [0], dtype=object)
        q = np.zeros(len(p) + 2, dtype=object)
        # (p' - p) * w^2
        for i, c in enumerate(dp):
            q[i + 2] += c
        for i, c in enumerate(p):
            q[i + 2] -= c
        polys.append(q)
    return tuple(tuple(int(c) for c in p) for p in polys)


def profile_derivatives(s, order):
    """Derivatives ``psi^(j)(s)``, ``j = 0..order``, of ``psi(s) = exp(-1/(1-s))`` for ``s < 1``.

    ``psi`` and all its derivatives vanish for ``s >= 1``.

    Returns
    -------
    ndarray, shape (order + 1,) + shape(s)
    """
    if order > config.BUMP_ORDER_CAP:
        raise OrderCapError(f"bump derivatives are capped at order {config.BUMP_ORDER_CAP}")
    s = np.asarray(s, dtype=float)
    flat = s.reshape(-1)
    out = np.zeros((order + 1, flat.size))
    inside = flat < 1.0
    if np.any(inside):
        w = 1.0 / (1.0 - flat[inside])
        # beyond w ~ 1e3 every p_j(w) exp(-w) underflows to zero
        idx = np.flatnonzero(inside)[w < 1e3]
        wl = w[w < 1e3]
        ew = np.exp(-wl)
        for j, p in enumerate(_profile_polys(order)):
            val = np.zeros_like(wl)
            for c in reversed(p):
                val = val * wl + c
            out[j, idx] = val * ew
    return out.reshape((order + 1,) + s.shape)


# fields -----------------------------------------------------------------------

class SmoothField:
    """Base class for scalar fields with closed-form derivatives.

    Subclasses implement :meth:`value` and :meth:`taylor`.
    """

    n = None
    cap = 64

    def value(self, x):
        raise NotImplementedError

    def taylor(self, x0, order):
        """Taylor coefficients ``d^alpha g(x0) / alpha!`` for ``|alpha| <= order``.

        ``x0`` has shape ``(n,)`` (scalar coefficients) or ``(N, n)``
        (coefficient arrays of length ``N``).
        """
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    def partials(self, x0, order):
        """Mixed partial derivatives ``d^alpha g(x0)`` for every ``|alpha| <= order`` (zeros included)."""
        self._check_order(order)
        tay = self.taylor(x0, order)
        zero = 0.0 * next(iter(tay.values()))
        return {a: tay.get(a, zero) * alpha_factorial(a) for a in multi_indices(self.n, order)}

    def gradient(self, x0):
        tay = self.taylor(x0, 1)
        return np.array([tay.get(tuple(int(i == j) for j in range(self.n)), 0.0) for i in range(self.n)])

    def _check_order(self, order):
        if order > self.cap:
            raise OrderCapError(f"derivative order {order} exceeds the field cap {self.cap}")

    def _points(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionError(f"expected points in R^{self.n}, got shape {x.shape}")
        return x

    def __add__(self, other):
        if other is None:
            return self
        return SumField([self, other])

    def __radd__(self, other):
        if other is None or (np.isscalar(other) and other == 0):
            return self
        return NotImplemented


class ZeroField(SmoothField):
    def __init__(self, n):
        self.n = int(n)

    def value(self, x):
        x = self._points(x)
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[0])

    def taylor(self, x0, order):
        x0 = self._points(x0)
        return {(0,) * self.n: 0.0 if x0.ndim == 1 else np.zeros(x0.shape[0])}


class PolynomialField(SmoothField):
    """Multivariate polynomial ``sum_beta c_beta x^beta``.

    Parameters
    ----------
    n : int
    coefficients : dict
        Exponent tuple -> real coefficient.
    """

    def __init__(self, n, coefficients):
        self.n = int(n)
        self.coefficients = {}
        for e, c in coefficients.items():
            e = tuple(int(x) for x in e)
            if len(e) != self.n or any(x < 0 for x in e):
                raise DimensionError(f"bad exponent {e} for n={self.n}")
            if c != 0:
                self.coefficients[e] = self.coefficients.get(e, 0.0) + float(c)

    @classmethod
    def linear(cls, weights):
        w = np.asarray(weights, dtype=float)
        n = w.size
        return cls(n, {tuple(int(i == j) for j in range(n)): w[i] for i in range(n)})

    @property
    def degree(self):
        return max((sum(e) for e in self.coefficients), default=0)

    def value(self, x):
        x = self._points(x)
        out = 0.0 if x.ndim == 1 else np.zeros(x.shape[0])
        for e, c in self.coefficients.items():
            term = c
            for i, p in enumerate(e):
                if p:
                    term = term * x[..., i] ** p
            out = out + term
        return out

    def taylor(self, x0, order):
        x0 = self._points(x0)
        zero = 0.0 if x0.ndim == 1 else np.zeros(x0.shape[0])
        out = {}
        for beta, c in self.coefficients.items():
            # expand c * prod_i (x0_i + h_i)^beta_i
            for alpha in multi_indices(self.n, min(order, sum(beta))):
                if any(a > b for a, b in zip(alpha, beta)):
                    continue
                term = c
                for i, (a, b) in enumerate(zip(alpha, beta)):
                    term = term * comb(b, a)
                    if b > a:
                        term = term * x0[..., i] ** (b - a)
                out[alpha] = out.get(alpha, zero) + term
        if not out:
            out[(0,) * self.n] = zero
        return out

    def to_dict(self):
        return [{"exponent": list(e), "coef": c} for e, c in sorted(self.coefficients.items())]


class SumField(SmoothField):
    def __init__(self, parts):
        flat = []
        for p in parts:
            if isinstance(p, SumField):
                flat.extend(p.parts)
            elif p is not None:
                flat.append(p)
        dims = {p.n for p in flat}
        if len(dims) != 1:
            raise DimensionError(f"cannot add fields of dimensions {sorted(dims)}")
        self.parts = flat
        self.n = dims.pop()
        self.cap = min(p.cap for p in flat)

    def value(self, x):
        out = 0.0
        for p in self.parts:
            out = out + p.value(x)
        return out

    def taylor(self, x0, order):
        out = {}
        for p in self.parts:
            out = ts_add(out, p.taylor(x0, order))
        return out


def check_feedback(field, tol=1e-14):
    """Raise if ``field(0) != 0``; feedback laws must vanish at the target."""
    v = float(field.value(np.zeros(field.n)))
    if abs(v) > tol:
        raise HypothesisNotMet(f"feedback must vanish at 0, got {v}")
    return field
