"""Bilinear plants, Kalman rank tests, singular inputs and the observability decomposition.

The plant is

    x' = (A + u B) x + b u,    y = C x

with ``A_u = A + u B``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from . import config
from .errors import DimensionError, UnobservableForAllInputs


def _as_matrix(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True)
class BilinearSystem:
    """Observed bilinear control system ``x' = A_u x + b u, y = C x``.

    Parameters
    ----------
    A, B : array_like, shape (n, n)
    C : array_like, shape (m, n)
        A 1-D input is read as a single output row.
    b : array_like, shape (n,)
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        b = np.asarray(self.b, dtype=float).reshape(-1)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape != (n, n):
            raise DimensionError(f"B must be {n}x{n}, got {B.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        if b.shape != (n,):
            raise DimensionError(f"b must have length {n}, got {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ValueError("b has non-finite entries")
        for name, val in (("A", A), ("B", B), ("C", C), ("b", b)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.C.shape[0]

    def A_u(self, u):
        return self.A + u * self.B

    def rhs(self, x, u):
        return self.A_u(u) @ x + self.b * u


@dataclass(frozen=True)
class ObservabilityMatrix:
    rows: np.ndarray
    rank: int
    smallest_singular_value: float
    singular_values: np.ndarray


def numerical_rank(s, shape):
    """Rank from singular values ``s`` of a matrix of the given shape."""
    s = np.asarray(s)
    if s.size == 0 or s[0] == 0.0:
        return 0
    thresh = max(shape) * s[0] * config.RANK_RTOL
    return int(np.sum(s > thresh))


def _check_pair(C, A):
    A = _as_matrix(A, "A")
    C = _as_matrix(C, "C")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    if C.shape[1] != n:
        raise DimensionError(f"C must have {n} columns, got {C.shape}")
    return C, A


def _stack(C, A):
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def observability_matrix(C, A):
    """Stack ``C, CA, ..., CA^(n-1)`` and report its numerical rank.

    >>> observability_matrix([1, 0], [[0, 1], [0, 0]]).rank
    2
    """
    C, A = _check_pair(C, A)
    rows = _stack(C, A)
    s = linalg.svdvals(rows)
    n = A.shape[0]
    # a tall (m*n) x n stack has n singular values; the n-th is the smallest
    smallest = float(s[n - 1]) if s.size >= n else 0.0
    return ObservabilityMatrix(rows, numerical_rank(s, rows.shape), smallest, s)


def is_observable_pair(C, A):
    C, A = _check_pair(C, A)
    return observability_matrix(C, A).rank == A.shape[0]


@dataclass(frozen=True)
class SingularInput:
    u: float
    sigma_min: float


def _obs_det(sys, u):
    return float(np.linalg.det(_stack(sys.C, sys.A_u(u))))


def _sigma_min(sys, u):
    return float(linalg.svdvals(_stack(sys.C, sys.A_u(u)))[sys.n - 1])


def determinant_polynomial(sys):
    """Coefficients (low to high) of ``u -> det O(C, A + uB)`` for a single output.

    The determinant has degree at most n(n-1)/2; it is sampled at that many
    plus one Chebyshev nodes and interpolated exactly.
    """
    if sys.m != 1:
        raise DimensionError("the determinant method needs a single output (square O)")
    n = sys.n
    deg = n * (n - 1) // 2
    if deg == 0:
        return np.array([_obs_det(sys, 0.0)])
    j = np.arange(deg + 1)
    nodes = np.cos((2 * j + 1) * np.pi / (2 * (deg + 1)))
    vals = np.array([_obs_det(sys, u) for u in nodes])
    return np.polynomial.polynomial.polyfit(nodes, vals, deg)


def singular_input_scan(sys, method="symbolic-determinant", grid=None, threshold=None):
    """Constant inputs ``u*`` at which ``(C, A + u*B)`` loses observability.

    Parameters
    ----------
    sys : BilinearSystem
    method : {"symbolic-determinant", "grid"}
        The determinant route interpolates ``det O(C, A_u)`` and takes real
        roots of the companion matrix; the grid route scans the smallest
        singular value and refines local minima.
    grid : array_like, optional
        Input values for the grid method (default ``linspace(-10, 10, 2001)``).
    threshold : float, optional
        Grid-method acceptance threshold on the smallest singular value.

    Returns
    -------
    list of SingularInput
        Sorted by ``u``.

    Raises
    ------
    UnobservableForAllInputs
        If the determinant polynomial vanishes identically.
    """
    if method == "symbolic-determinant":
        return _scan_symbolic(sys)
    if method == "grid":
        return _scan_grid(sys, grid, threshold)
    raise ValueError(f"unknown method {method!r}")


def _scan_symbolic(sys):
    coef = determinant_polynomial(sys)
    # Hadamard bound on |det| over the sampling interval sets the zero scale
    scale = max(
        float(np.prod(np.linalg.norm(_stack(sys.C, sys.A_u(u)), axis=1)))
        for u in (-1.0, 0.0, 1.0)
    )
    if scale == 0.0 or np.all(np.abs(coef) <= 1e-12 * scale):
        raise UnobservableForAllInputs("det O(C, A + uB) is identically zero")
    big = np.max(np.abs(coef))
    coef = np.where(np.abs(coef) <= 1e-12 * big, 0.0, coef)
    coef = np.trim_zeros(coef, "b")
    if coef.size <= 1:
        return []
    roots = np.polynomial.polynomial.polyroots(coef)
    dcoef = np.polynomial.polynomial.polyder(coef)
    found = []
    for r in roots:
        if abs(r.imag) >= 1e-8 * max(1.0, abs(r.real)):
            continue
        u = float(r.real)
        # Newton polish on the directly evaluated determinant
        for _ in range(5):
            d = float(np.polynomial.polynomial.polyval(u, dcoef))
            if d == 0.0:
                break
            step = _obs_det(sys, u) / d
            u -= step
            if abs(step) <= 1e-15 * max(1.0, abs(u)):
                break
        if any(abs(u - f) <= 1e-7 * max(1.0, abs(u)) for f in found):
            continue
        found.append(u)
    return [SingularInput(u, _sigma_min(sys, u)) for u in sorted(found)]


def _scan_grid(sys, grid, threshold):
    us = np.linspace(-10.0, 10.0, 2001) if grid is None else np.asarray(grid, dtype=float)
    sig = np.array([_sigma_min(sys, u) for u in us])
    if threshold is None:
        threshold = 1e-6 * max(1.0, float(np.max(linalg.svdvals(_stack(sys.C, sys.A)))))
    out = []
    for i in range(len(us)):
        left = sig[i - 1] if i > 0 else np.inf
        right = sig[i + 1] if i + 1 < len(us) else np.inf
        if not (sig[i] <= left and sig[i] <= right):
            continue
        lo = us[max(i - 1, 0)]
        hi = us[min(i + 1, len(us) - 1)]
        if hi > lo:
            res = optimize.minimize_scalar(lambda u: _sigma_min(sys, u), bounds=(lo, hi),
                                           method="bounded", options={"xatol": 1e-13})
            u, s = float(res.x), float(res.fun)
        else:
            u, s = float(us[i]), float(sig[i])
        if s < threshold and not any(abs(u - o.u) < 1e-9 for o in out):
            out.append(SingularInput(u, s))
    return sorted(out, key=lambda o: o.u)


@dataclass(frozen=True)
class DecompositionResult:
    """Observable/unobservable split ``T A0 T^-1 = [[A11, 0], [A21, A22]]``, ``C T^-1 = [C1, 0]``."""

    T: np.ndarray
    k: int
    A11: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    C1: np.ndarray
    residual: float
    A_bar: np.ndarray
    C_bar: np.ndarray


def kalman_decomposition(C, A0):
    """Kalman observability decomposition with an orthogonal change of basis.

    The first ``k`` rows of ``T`` span the row space of ``O(C, A0)``; the
    remaining rows complete them (via QR) to an orthonormal basis, so they
    span the unobservable subspace.
    """
    C, A0 = _check_pair(C, A0)
    if not np.any(C):
        raise ValueError("C = 0 has no observable part")
    n = A0.shape[0]
    O = _stack(C, A0)
    _, s, Vt = linalg.svd(O)
    k = numerical_rank(s, O.shape)
    basis = Vt[:k].T
    Q, _ = linalg.qr(np.hstack([basis, np.eye(n)]))
    Q = Q[:, :n]
    T = Q.T
    Tinv = Q
    A_bar = T @ A0 @ Tinv
    C_bar = C @ Tinv
    residual = 0.0
    if k < n:
        residual = max(float(np.max(np.abs(A_bar[:k, k:]))), float(np.max(np.abs(C_bar[:, k:]))))
    return DecompositionResult(
        T=T, k=k,
        A11=A_bar[:k, :k], A21=A_bar[k:, :k], A22=A_bar[k:, k:], C1=C_bar[:, :k],
        residual=residual, A_bar=A_bar, C_bar=C_bar,
    )
