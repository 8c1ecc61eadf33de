"""Executable checks of the matrix-polynomial identities behind the jet calculus.

On the exact backend every identity must hold with zero residual; a sign flip
in the derivative part of ``Psi`` (``fault=True``) must make the suite fail.
"""
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from . import config
from .errors import IdentityViolation, OrderCapError
from .jets import f_numeric
from .matpoly import _combine, _vandermonde_inverse, as_coefficient, f_symbolic, p_sequence, psi, q_partial, r_decomposition
from .systems import BilinearSystem


@dataclass(frozen=True)
class IdentityResult:
    name: str
    passed: bool
    checked: int
    worst: float
    detail: str = ""
    required: bool = True


def random_rational_matrix(rng, n, lo=-3, hi=3, den=3):
    num = rng.integers(lo, hi + 1, size=(n, n))
    d = rng.integers(1, den + 1, size=(n, n))
    M = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            M[i, j] = Fraction(int(num[i, j]), int(d[i, j]))
    return M


def _poly_sum_powers(R, k):
    """``sum_j k^j R^j`` for a list of polynomials."""
    out = None
    for j, Rj in enumerate(R):
        term = Rj.scale(k ** j)
        out = term if out is None else out + term
    return out


def _check_system(A, B, imax, kmax, fault):
    """Residual counts of the recurrence, closed-form, increment and degree identities for one system."""
    sign = -1 if fault else 1
    top = 2 * imax + kmax + 1
    seq = p_sequence(A, B, top, exact=True, limit=max(config.KMAX_LIMIT, top), _deriv_sign=sign)
    fails = {"recurrence": 0, "closed_form": 0, "increment": 0, "degree": 0, "footnote": 0}
    counts = dict.fromkeys(fails, 0)
    Bc = as_coefficient(B, True)
    for i in range(1, imax + 1):
        try:
            R, _ = r_decomposition(A, B, i, exact=True, seq=seq)
            closed_ok = True
        except IdentityViolation:
            closed_ok = False
            # recompute without the built-in assertion to keep checking the rest
            R = _r_unchecked(seq, i)
        counts["closed_form"] += 1
        lhs = R[i - 1].scale(factorial(i - 1))
        rhs = seq[i - 1].left_mul(Bc)
        if not closed_ok or not lhs == rhs:
            fails["closed_form"] += 1
        for k in range(kmax + 1):
            counts["recurrence"] += 1
            Q = q_partial(seq[i + k], i)
            if not Q == _poly_sum_powers(R, k):
                fails["recurrence"] += 1
        counts["footnote"] += 1
        if any(Rj.min_nvars > max(i - 1, 0) for Rj in R):
            fails["footnote"] += 1
    for i in range(1, imax + 1):
        for ell in range(1, kmax + 1):
            counts["increment"] += 1
            lhs = q_partial(seq[i + 1 + ell], i + 1)
            rhs = psi(q_partial(seq[i + ell], i), A, B, _deriv_sign=sign) + q_partial(seq[i + ell], i + 1)
            if not lhs == rhs:
                fails["increment"] += 1
    for k, P in enumerate(seq):
        counts["degree"] += 1
        if P.total_degree() > k or P.min_nvars > k:
            fails["degree"] += 1
    return fails, counts


def _r_unchecked(seq, i):
    Qs = [q_partial(seq[i + k], i) for k in range(i)]
    nv = max(Q.nvars for Q in Qs)
    Qs = [Q.widen(nv) for Q in Qs]
    Vinv = _vandermonde_inverse(i, True)
    return [_combine(Qs, [Vinv[j][kk] for kk in range(i)]) for j in range(i)]


def exact_identity_suite(systems=10, n_max=3, imax=4, kmax=4, seed=0, fault=False):
    """Run the exact identities on random rational systems of size ``1..n_max``.

    Returns
    -------
    list of IdentityResult
        ``recurrence``, ``closed_form``, ``increment``, ``degree`` (required)
        and ``footnote`` (the stronger variable-range claim; reported only).
    """
    if kmax > config.KMAX_LIMIT or imax > config.KMAX_LIMIT:
        raise OrderCapError(f"orders (imax={imax}, kmax={kmax}) exceed the limit {config.KMAX_LIMIT}")
    rng = np.random.default_rng(seed)
    tot_f = {}
    tot_c = {}
    for s in range(systems):
        n = int(rng.integers(1, n_max + 1)) if s else n_max
        A = random_rational_matrix(rng, n)
        B = random_rational_matrix(rng, n)
        f, c = _check_system(A, B, imax, kmax, fault)
        for key in f:
            tot_f[key] = tot_f.get(key, 0) + f[key]
            tot_c[key] = tot_c.get(key, 0) + c[key]
    labels = {
        "recurrence": "Q_i^(i+k) = sum_j k^j R_i^j",
        "closed_form": "(i-1)! R_i^(i-1) = B P_(i-1)",
        "increment": "Q_(i+1)^(i+1+l) = Psi(Q_i^(i+l)) + Q_(i+1)^(i+l)",
        "degree": "deg P_k <= k, P_k in End[X_0..X_(k-1)]",
        "footnote": "R_i^j uses only X_0..X_(i-2)",
    }
    return [IdentityResult(key, tot_f[key] == 0, tot_c[key], float(tot_f[key]),
                           f"{labels[key]}: {tot_f[key]} failures out of {tot_c[key]}",
                           required=(key != "footnote"))
            for key in ("recurrence", "closed_form", "increment", "degree", "footnote")]


def jet_crosscheck(samples=50, n_max=4, kmax=6, seed=0, rel_tol=1e-8, fault=False):
    """``C B^m P_k(v) omega0`` against the propagated jet ``C B^m omega^(k)(0)`` on random data."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    fails = 0
    sign = -1 if fault else 1
    for _ in range(samples):
        n = int(rng.integers(2, n_max + 1))
        A = rng.integers(-3, 4, size=(n, n)) / rng.integers(1, 4, size=(n, n))
        B = rng.integers(-3, 4, size=(n, n)) / rng.integers(1, 4, size=(n, n))
        C = rng.integers(-3, 4, size=(1, n)) / 2.0
        sys = BilinearSystem(A, B, C, np.zeros(n))
        m = int(rng.integers(0, n))
        k = int(rng.integers(0, kmax + 1))
        v = rng.uniform(-1.0, 1.0, size=max(k, 1))
        w = rng.standard_normal(n)
        w /= np.linalg.norm(w)
        if fault and k >= 2:
            Pk = p_sequence(A, B, k, _deriv_sign=sign)[k]
            sym = float((np.atleast_2d(C) @ np.linalg.matrix_power(B, m) @ Pk(v) @ w)[0])
        else:
            sym = f_symbolic(A, B, C, m, k, v, w)
        num = f_numeric(sys, m, v, w, k)
        err = abs(sym - num) / (1.0 + abs(sym))
        worst = max(worst, err)
        if err > rel_tol:
            fails += 1
    return IdentityResult("jet_crosscheck", fails == 0, samples, worst,
                          f"|C B^m P_k(v) w - C B^m w^(k)(0)| / (1 + |.|): worst {worst:.3e}, {fails} failures")


def run_suite(systems=10, n_max=3, imax=4, kmax=4, jet_samples=50, jet_kmax=6, seed=0, fault=False):
    """Every identity plus the symbolic/numeric cross-check. Returns ``(results, all_required_passed)``."""
    results = exact_identity_suite(systems, n_max, imax, kmax, seed, fault)
    results.append(jet_crosscheck(jet_samples, max(n_max, 2) + 1, jet_kmax, seed, fault=fault))
    ok = all(r.passed for r in results if r.required)
    return results, ok
