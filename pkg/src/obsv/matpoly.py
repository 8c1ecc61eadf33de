"""Matrix-valued polynomials in commuting scalar indeterminates X_0, X_1, ...

The indeterminates stand for the input derivatives ``u^(i)(0)``. They commute
with each other and with matrices, while the matrix coefficients do not
commute among themselves; each monomial therefore carries one coefficient
matrix that is already the collapsed product.

Two coefficient backends share the same code path: ``exact=True`` stores
``fractions.Fraction`` entries in object arrays, ``exact=False`` stores
float64 arrays.

The sequence ``P_0 = I, P_{k+1} = Psi(P_k)`` gives the Taylor coefficients
of the flow of ``w' = (A + u(t) B) w``: ``w^(k)(0) = P_k(u(0), ..., u^(k-1)(0)) w(0)``.
"""
from fractions import Fraction
from math import factorial

import numpy as np

from . import config
from .errors import DimensionError, HypothesisNotMet, IdentityViolation, OrderCapError, BudgetExhausted


def _is_exact_value(x):
    return isinstance(x, (int, Fraction, np.integer))


def as_coefficient(M, exact):
    """Convert ``M`` to a coefficient matrix of the requested backend."""
    M = np.atleast_2d(np.asarray(M, dtype=object if exact else float))
    if exact:
        out = np.empty(M.shape, dtype=object)
        for idx, x in np.ndenumerate(M):
            if isinstance(x, float):
                # floats convert exactly to their binary rational value
                out[idx] = Fraction(x)
            elif _is_exact_value(x):
                out[idx] = Fraction(x)
            else:
                raise TypeError(f"cannot use {type(x).__name__} in the exact backend")
        return out
    return M


def _is_zero(M):
    if M.dtype == object:
        return all(x == 0 for x in M.flat)
    return not np.any(M)


class MatPoly:
    """Matrix polynomial ``sum_alpha X^alpha * M_alpha``.

    Parameters
    ----------
    terms : dict
        Exponent tuple (length ``nvars``) -> coefficient matrix. Zero
        coefficients are dropped.
    nvars : int
        Number of indeterminates the polynomial is declared over.
    dim : int
        Matrix size ``n``.
    exact : bool
        Backend selector.
    """

    __slots__ = ("terms", "nvars", "dim", "exact")

    def __init__(self, terms, nvars, dim, exact=False):
        self.nvars = int(nvars)
        self.dim = int(dim)
        self.exact = bool(exact)
        clean = {}
        for e, M in terms.items():
            e = tuple(int(x) for x in e)
            if len(e) < self.nvars:
                e = e + (0,) * (self.nvars - len(e))
            elif len(e) > self.nvars:
                if any(e[self.nvars:]):
                    raise DimensionError(f"exponent {e} uses more than {self.nvars} variables")
                e = e[: self.nvars]
            if not _is_zero(M):
                clean[e] = M
        self.terms = clean

    # construction -------------------------------------------------------

    @classmethod
    def constant(cls, M, nvars=0, exact=False):
        M = as_coefficient(M, exact)
        return cls({(0,) * nvars: M}, nvars, M.shape[0], exact)

    @classmethod
    def identity(cls, dim, exact=False):
        return cls.constant(np.eye(dim, dtype=int) if exact else np.eye(dim), 0, exact)

    @classmethod
    def zero(cls, dim, nvars=0, exact=False):
        return cls({}, nvars, dim, exact)

    def _new(self, terms, nvars=None):
        return MatPoly(terms, self.nvars if nvars is None else nvars, self.dim, self.exact)

    def _zero_matrix(self):
        if self.exact:
            out = np.empty((self.dim, self.dim), dtype=object)
            out.fill(Fraction(0))
            return out
        return np.zeros((self.dim, self.dim))

    def widen(self, nvars):
        if nvars < self.nvars:
            raise DimensionError("cannot narrow a polynomial")
        return self._new({e + (0,) * (nvars - self.nvars): M for e, M in self.terms.items()}, nvars)

    # structure ----------------------------------------------------------

    @property
    def min_nvars(self):
        """Smallest ``l`` with the polynomial in ``End[X_0..X_{l-1}]``."""
        used = [i for e in self.terms for i, p in enumerate(e) if p]
        return max(used) + 1 if used else 0

    def total_degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self):
        return not self.terms

    def __len__(self):
        return len(self.terms)

    # arithmetic ---------------------------------------------------------

    def _align(self, other):
        if self.dim != other.dim or self.exact != other.exact:
            raise DimensionError("incompatible polynomials")
        k = max(self.nvars, other.nvars)
        return self.widen(k), other.widen(k)

    def __add__(self, other):
        a, b = self._align(other)
        terms = dict(a.terms)
        for e, M in b.terms.items():
            terms[e] = terms[e] + M if e in terms else M
        return a._new(terms)

    def __neg__(self):
        return self._new({e: -M for e, M in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        if self.exact:
            c = Fraction(c)
        return self._new({e: c * M for e, M in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, MatPoly):
            return self.matmul(other)
        return self.scale(other)

    __rmul__ = scale

    def matmul(self, other):
        """Product ``self * other`` (matrix order preserved, monomials commute)."""
        a, b = self._align(other)
        terms = {}
        for e1, M1 in a.terms.items():
            for e2, M2 in b.terms.items():
                e = tuple(x + y for x, y in zip(e1, e2))
                P = M1.dot(M2)
                terms[e] = terms[e] + P if e in terms else P
        return a._new(terms)

    def right_mul(self, M):
        M = as_coefficient(M, self.exact)
        return self._new({e: C.dot(M) for e, C in self.terms.items()})

    def left_mul(self, M):
        M = as_coefficient(M, self.exact)
        return self._new({e: M.dot(C) for e, C in self.terms.items()})

    def shift_var(self, i, nvars=None):
        """Multiply by the indeterminate ``X_i``."""
        nv = max(self.nvars, i + 1) if nvars is None else nvars
        out = {}
        for e, M in self.widen(nv).terms.items():
            e = list(e)
            e[i] += 1
            out[tuple(e)] = M
        return self._new(out, nv)

    def diff(self, i):
        """Formal partial derivative with respect to ``X_i``."""
        if i < 0:
            raise IndexError("variable index must be non-negative")
        out = {}
        for e, M in self.terms.items():
            if i < len(e) and e[i] > 0:
                p = e[i]
                e2 = list(e)
                e2[i] -= 1
                out[tuple(e2)] = p * M
        return self._new(out)

    def __eq__(self, other):
        if not isinstance(other, MatPoly):
            return NotImplemented
        d = self - other
        if self.exact:
            return d.is_zero()
        return all(not np.any(M) for M in d.terms.values())

    def max_abs_coefficient(self):
        return max((float(np.max(np.abs(np.asarray(M, dtype=float)))) for M in self.terms.values()), default=0.0)

    # evaluation ---------------------------------------------------------

    def __call__(self, v):
        return evaluate(self, v)

    def to_float(self):
        return MatPoly({e: np.asarray(M, dtype=float) for e, M in self.terms.items()},
                       self.nvars, self.dim, exact=False)

    def sorted_terms(self):
        """Terms in graded lexicographic order."""
        return sorted(self.terms.items(), key=lambda kv: (sum(kv[0]), tuple(-x for x in kv[0])))

    def __repr__(self):
        return f"MatPoly(nvars={self.nvars}, dim={self.dim}, terms={len(self.terms)}, exact={self.exact})"

    def pretty(self):
        """Deterministic text dump used in identity reports."""
        if not self.terms:
            return "0"
        lines = []
        for e, M in self.sorted_terms():
            mono = "*".join(f"X{i}^{p}" if p > 1 else f"X{i}" for i, p in enumerate(e) if p) or "1"
            rows = "; ".join(", ".join(str(x) for x in row) for row in M)
            lines.append(f"{mono} * [{rows}]")
        return "\n".join(lines)


def evaluate(P, v):
    """Numerical value ``P(v_0, ..., v_{k-1})`` as a float matrix."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size < P.nvars:
        raise DimensionError(f"need at least {P.nvars} values, got {v.size}")
    if not np.all(np.isfinite(v[: P.nvars])):
        raise ValueError("evaluation point has non-finite entries")
    out = np.zeros((P.dim, P.dim))
    for e, M in P.terms.items():
        w = 1.0
        for x, p in zip(v, e):
            if p:
                w *= x ** p
        out += w * np.asarray(M, dtype=float)
    return out


def psi(P, A, B, _deriv_sign=1):
    """Apply ``Psi(P) = P (A + X_0 B) + sum_i dP/dX_i * X_{i+1}``.

    The result is declared over ``P.nvars + 1`` indeterminates.
    ``_deriv_sign`` exists only for mutation tests of the identity suite.
    """
    k = P.nvars
    nv = k + 1
    Pw = P.widen(nv)
    out = Pw.right_mul(A) + Pw.right_mul(B).shift_var(0, nv)
    for i in range(k):
        d = Pw.diff(i)
        if d.terms:
            term = d.shift_var(i + 1, nv)
            out = out + (term if _deriv_sign == 1 else -term)
    return out


def p_sequence(A, B, kmax, exact=False, limit=None, _deriv_sign=1):
    """``[P_0, ..., P_kmax]`` with ``P_0 = I`` and ``P_{k+1} = Psi(P_k)``."""
    limit = config.KMAX_LIMIT if limit is None else limit
    if kmax < 0:
        raise ValueError("kmax must be non-negative")
    if kmax > limit:
        raise OrderCapError(f"kmax={kmax} exceeds the limit {limit}")
    A = as_coefficient(A, exact)
    B = as_coefficient(B, exact)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise DimensionError("A and B must be square of equal size")
    seq = [MatPoly.identity(n, exact)]
    for _ in range(kmax):
        seq.append(psi(seq[-1], A, B, _deriv_sign))
    return seq


def q_partial(P_k, i, k=None):
    """``Q_i^k = dP_k / dX_{k-i}`` for ``1 <= i <= k``.

    ``k`` defaults to the declared number of indeterminates of ``P_k``.
    """
    k = P_k.nvars if k is None else k
    if not 1 <= i <= k:
        raise IndexError(f"need 1 <= i <= k, got i={i}, k={k}")
    return P_k.diff(k - i)


def _vandermonde_inverse(i, exact):
    if exact:
        # Gauss-Jordan over the rationals
        V = [[Fraction(kk) ** j for j in range(i)] for kk in range(i)]
        inv = [[Fraction(int(r == c)) for c in range(i)] for r in range(i)]
        for col in range(i):
            piv = next(r for r in range(col, i) if V[r][col] != 0)
            V[col], V[piv] = V[piv], V[col]
            inv[col], inv[piv] = inv[piv], inv[col]
            p = V[col][col]
            V[col] = [x / p for x in V[col]]
            inv[col] = [x / p for x in inv[col]]
            for r in range(i):
                if r != col and V[r][col] != 0:
                    f = V[r][col]
                    V[r] = [a - f * b for a, b in zip(V[r], V[col])]
                    inv[r] = [a - f * b for a, b in zip(inv[r], inv[col])]
        return inv
    V = np.vander(np.arange(i, dtype=float), i, increasing=True)
    return np.linalg.inv(V)


def _combine(polys, weights):
    out = None
    for P, w in zip(polys, weights):
        if w == 0:
            continue
        term = P.scale(w)
        out = term if out is None else out + term
    if out is None:
        out = MatPoly.zero(polys[0].dim, polys[0].nvars, polys[0].exact)
    return out


def r_decomposition(A, B, i, exact=False, seq=None, tol=1e-10):
    """Coefficients ``R_i^0, ..., R_i^{i-1}`` with ``Q_i^{i+k} = sum_j k^j R_i^j``.

    The system is solved on the nodes ``k = 0, ..., i-1``. The closed form
    ``(i-1)! R_i^{i-1} = B P_{i-1}`` is then checked; a mismatch raises
    :class:`IdentityViolation`.

    Returns
    -------
    R : list of MatPoly
    residual : float
        Largest coefficient of ``(i-1)! R_i^{i-1} - B P_{i-1}`` (0 on the exact backend).
    """
    if i < 1:
        raise ValueError("i must be >= 1")
    if seq is None or len(seq) < 2 * i:
        seq = p_sequence(A, B, 2 * i - 1, exact=exact, limit=max(config.KMAX_LIMIT, 2 * i - 1))
    Qs = [q_partial(seq[i + k], i) for k in range(i)]
    nv = max(Q.nvars for Q in Qs)
    Qs = [Q.widen(nv) for Q in Qs]
    Vinv = _vandermonde_inverse(i, exact)
    R = [_combine(Qs, [Vinv[j][kk] for kk in range(i)]) for j in range(i)]
    Bc = as_coefficient(B, exact)
    closed = seq[i - 1].left_mul(Bc).widen(nv)
    diff = R[i - 1].scale(factorial(i - 1)) - closed
    if exact:
        residual = 0.0 if diff.is_zero() else diff.max_abs_coefficient()
        if residual:
            raise IdentityViolation(f"(i-1)! R_i^(i-1) != B P_(i-1) for i={i}")
    else:
        residual = diff.max_abs_coefficient()
        scale = max(1.0, closed.max_abs_coefficient())
        if residual > tol * scale:
            raise IdentityViolation(f"(i-1)! R_i^(i-1) - B P_(i-1) has size {residual:.3e} for i={i}")
    return R, residual


def f_symbolic(A, B, C, m, k, v, omega0):
    """``C B^m P_k(v) omega0`` (for ``k = 0``: ``C B^m omega0``)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    omega0 = np.asarray(omega0, dtype=float)
    Bm = np.linalg.matrix_power(B, m)
    if k == 0:
        val = C @ Bm @ omega0
    else:
        Pk = p_sequence(A, B, k)[k]
        val = C @ Bm @ evaluate(Pk, v) @ omega0
    return float(val[0]) if val.size == 1 else val


def _scalar_output(C, M, omega0):
    val = C @ M @ omega0
    return float(np.linalg.norm(val)) if val.size > 1 else float(abs(val[0]))


def rank_certificate(A, B, C, m, v, omega0, k0=None, N=1, i_budget=8, k_budget=None, rel_tol=1e-12):
    """Jacobian of ``phi(v) = (C B^m P_{k0+r}(v) omega0)_{r<N}`` and its staircase.

    Parameters
    ----------
    v : array_like
        Input jet ``(u(0), u'(0), ...)``; missing trailing entries are read as 0.
    k0 : int, optional
        Starting order; searched (smallest valid) when omitted.
    N : int
        Number of rows of ``phi``.
    i_budget : int
        Largest ``i`` tried when looking for ``C B^(m+1) P_(i-1)(v) omega0 != 0``.

    Returns
    -------
    dict
        ``jacobian`` (N x (k0+N)), ``rank``, ``diagonal`` (the staircase
        entries ``a_r``), ``i0`` and ``k0``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[0] != 1:
        raise DimensionError("rank_certificate is stated for a single output")
    omega0 = np.asarray(omega0, dtype=float)
    n = A.shape[0]
    Bm = np.linalg.matrix_power(B, m)
    k_budget = i_budget * 2 + N if k_budget is None else k_budget
    kmax = max(k_budget + N, 2 * i_budget)
    seq = p_sequence(A, B, kmax, limit=max(config.KMAX_LIMIT, kmax))
    need = kmax + 1
    vv = np.zeros(need)
    vin = np.asarray(v, dtype=float).reshape(-1)[:need]
    vv[: vin.size] = vin

    scale = max(1.0, float(np.linalg.norm(C)) * float(np.linalg.norm(Bm)) * float(np.linalg.norm(omega0)))
    Bm1 = Bm @ B
    if not any(abs((C @ Bm1 @ evaluate(seq[i - 1], vv) @ omega0)[0]) > rel_tol * scale
               for i in range(1, i_budget + 1)):
        raise HypothesisNotMet(
            f"C B^(m+1) P_(i-1)(v) omega0 = 0 for every i <= {i_budget}; the rank corollary does not apply")

    def entry(i, k):
        return float((C @ Bm @ evaluate(q_partial(seq[k], i, k), vv) @ omega0)[0])

    i0 = None
    for i in range(1, i_budget + 1):
        R, _ = r_decomposition(A, B, i, seq=seq)
        if any(abs((C @ Bm @ evaluate(Rj.widen(max(Rj.nvars, 1)), vv) @ omega0)[0]) > rel_tol * scale for Rj in R):
            i0 = i
            break
    if i0 is None:
        raise BudgetExhausted("no index i0 found within the budget")

    def staircase(start):
        return [entry(i0, start + r) for r in range(N)]

    if k0 is None:
        for cand in range(i0, k_budget + 1):
            a = staircase(cand)
            if all(abs(x) > rel_tol * scale for x in a):
                k0 = cand
                break
        if k0 is None:
            raise BudgetExhausted(f"no k0 <= {k_budget} with a full staircase")
    elif k0 < i0:
        raise ValueError(f"k0={k0} must be at least i0={i0}")
    a = staircase(k0)

    J = np.zeros((N, k0 + N))
    for r in range(N):
        k = k0 + r
        Pk = seq[k]
        for ell in range(min(k, k0 + N)):
            J[r, ell] = (C @ Bm @ evaluate(Pk.diff(ell), vv) @ omega0)[0]
    s = np.linalg.svd(J, compute_uv=False)
    rank = int(np.sum(s > max(J.shape) * (s[0] if s.size else 0.0) * 1e-12)) if s.size and s[0] > 0 else 0
    return {"jacobian": J, "rank": rank, "diagonal": a, "i0": i0, "k0": k0}
