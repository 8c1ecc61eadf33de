"""Compactly supported bump perturbations of the feedback and the search for good ones.

A perturbation is a finite sum of radial bumps
``a * psi(|x - c|^2 / r^2)`` with ``psi(s) = exp(-1 / (1 - s))`` for ``s < 1``.
Keeping every support ball away from ``B(0, R)`` makes the perturbation
vanish identically near the target.
"""
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import InfeasibleGeometry, HypothesisNotMet
from .fields import SmoothField, compose_univariate, multi_indices, alpha_factorial, profile_derivatives
from .regions import grid_points
from .simulate import observability_verdict
from .systems import is_observable_pair


@dataclass(frozen=True)
class Atom:
    center: tuple
    radius: float
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "amplitude", float(self.amplitude))
        if not self.radius > 0:
            raise ValueError("bump radius must be positive")


class BumpPerturbation(SmoothField):
    """Sum of radial bumps; exact derivatives up to ``config.BUMP_ORDER_CAP``."""

    def __init__(self, n, atoms=()):
        self.n = int(n)
        self.atoms = tuple(a if isinstance(a, Atom) else Atom(*a) for a in atoms)
        for a in self.atoms:
            if len(a.center) != self.n:
                raise ValueError(f"atom center {a.center} is not in R^{self.n}")
        self.cap = config.BUMP_ORDER_CAP

    def value(self, x):
        x = self._points(x)
        out = np.zeros(x.shape[:-1])
        for a in self.atoms:
            d = x - np.array(a.center)
            s = np.sum(d * d, axis=-1) / a.radius ** 2
            out = out + a.amplitude * profile_derivatives(s, 0)[0]
        return float(out) if out.ndim == 0 else out

    def taylor(self, x0, order):
        self._check_order(order)
        x0 = self._points(x0)
        zero = 0.0 if x0.ndim == 1 else np.zeros(x0.shape[0])
        out = {a: zero for a in multi_indices(self.n, order)}
        for atom in self.atoms:
            d = x0 - np.array(atom.center)
            r2 = atom.radius ** 2
            s0 = np.sum(d * d, axis=-1) / r2
            if np.all(s0 >= 1.0):
                continue
            # s(x0 + h) - s0 = sum 2 d_i h_i / r^2 + sum h_i^2 / r^2
            inner = {}
            for i in range(self.n):
                e1 = tuple(int(j == i) for j in range(self.n))
                e2 = tuple(2 * int(j == i) for j in range(self.n))
                inner[e1] = 2.0 * d[..., i] / r2
                inner[e2] = 1.0 / r2
            series = compose_univariate(profile_derivatives(s0, order), inner, order)
            for a, c in series.items():
                out[a] = out[a] + atom.amplitude * c
        return out

    @property
    def is_zero(self):
        return all(a.amplitude == 0.0 for a in self.atoms)

    def scaled(self, factor):
        return BumpPerturbation(self.n, [Atom(a.center, a.radius, factor * a.amplitude) for a in self.atoms])

    def vanishes_on_ball(self, R):
        """Every support ball lies outside the closed ball ``B(0, R)``."""
        return all(np.linalg.norm(a.center) - a.radius > R for a in self.atoms)

    def to_dict(self):
        return {"atoms": [{"center": list(a.center), "radius": a.radius, "amplitude": a.amplitude}
                          for a in self.atoms]}

    @classmethod
    def from_dict(cls, d, n=None):
        atoms = [Atom(a["center"], a["radius"], a["amplitude"]) for a in d["atoms"]]
        if n is None:
            if not atoms:
                raise ValueError("dimension needed for an empty perturbation")
            n = len(atoms[0].center)
        return cls(n, atoms)

    def __eq__(self, other):
        return isinstance(other, BumpPerturbation) and self.n == other.n and self.atoms == other.atoms

    def __repr__(self):
        return f"BumpPerturbation(n={self.n}, atoms={list(self.atoms)!r})"


def dumps_delta(delta):
    """JSON text of a perturbation; floats are written in shortest round-trip form."""
    return json.dumps(delta.to_dict(), sort_keys=True, indent=2) + "\n"


def loads_delta(text, n=None):
    return BumpPerturbation.from_dict(json.loads(text), n)


# norm estimate -----------------------------------------------------------------

@dataclass(frozen=True)
class NormEstimate:
    """Sampled ``C^k`` norm: largest mixed partial of order ``<= k`` over the sample."""

    value: float
    order: int
    grid_points: int
    refined_points: int
    resolution: int


def _ring_points(atom, n, rings=8, per_ring=32):
    """Points around an atom centre, denser where the profile derivatives peak."""
    c = np.array(atom.center)
    pts = [c]
    radii = atom.radius * np.linspace(0.05, 0.95, rings)
    if n == 1:
        for rr in radii:
            pts.extend([c - rr, c + rr])
        return np.array(pts)
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((per_ring, n))
    if n == 2:
        th = 2 * np.pi * np.arange(per_ring) / per_ring
        dirs = np.column_stack([np.cos(th), np.sin(th)])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for rr in radii:
        pts.extend(c + rr * dirs)
    return np.array(pts)


def _max_partial(delta, pts, k):
    if len(pts) == 0:
        return 0.0
    tay = delta.taylor(pts, k)
    best = 0.0
    for a, c in tay.items():
        best = max(best, float(np.max(np.abs(c))) * alpha_factorial(a))
    return best


def norm_k_K(delta, k, region, resolution=41):
    """Estimate of ``sup_{x in K} max_{|alpha| <= k} |d^alpha delta(x)|``.

    Sampled on a tensor grid of the region plus rings around every atom
    centre; this is an estimate from below of the true supremum.
    """
    delta._check_order(k)
    if not delta.atoms or delta.is_zero:
        return NormEstimate(0.0, k, 0, 0, resolution)
    grid = grid_points(region, resolution)
    ring = np.vstack([_ring_points(a, delta.n) for a in delta.atoms])
    ring = ring[region.contains(ring)]
    val = max(_max_partial(delta, grid, k), _max_partial(delta, ring, k))
    return NormEstimate(val, k, len(grid), len(ring), resolution)


# sampling ------------------------------------------------------------------------

def sample_candidate(seed, R, region, eta, k, atoms=3, radius_range=(0.3, 1.2), resolution=41,
                     max_tries=10_000):
    """Random bump perturbation vanishing on ``B(0, R)`` with sampled ``C^k`` norm ``0.9 eta``.

    Centres are uniform in the region outside ``B(0, R)``; each radius is
    uniform in ``radius_range`` clipped so the support stays clear of
    ``B(0, R)``; amplitudes are uniform in ``[-1, 1]`` before the common
    rescaling.

    Raises
    ------
    InfeasibleGeometry
        If no admissible centre is found.
    """
    n = region.n
    if eta == 0 or atoms == 0:
        return BumpPerturbation(n)
    rng = np.random.default_rng(seed)
    lo, hi = region.bounding_box()
    gap = 1e-3 * max(1.0, R)
    r_lo, r_hi = radius_range
    chosen = []
    tries = 0
    while len(chosen) < atoms:
        tries += 1
        if tries > max_tries:
            raise InfeasibleGeometry(f"no room for bumps in the region outside B(0, {R})")
        c = rng.uniform(lo, hi)
        room = np.linalg.norm(c) - R - gap
        if room <= 0 or not region.contains(c):
            continue
        r = min(rng.uniform(r_lo, r_hi), room)
        a = rng.uniform(-1.0, 1.0)
        chosen.append(Atom(c, r, a))
    delta = BumpPerturbation(n, chosen)
    est = norm_k_K(delta, k, region, resolution).value
    if est == 0.0:
        return delta
    return delta.scaled(config.NORM_SAFETY * eta / est)


# search ----------------------------------------------------------------------------

@dataclass
class CandidateRecord:
    index: int
    margin: float
    norm: float
    observable: bool


@dataclass
class SearchResult:
    accepted: bool
    delta: BumpPerturbation
    margin: float
    tried: int
    trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "accepted": self.accepted,
            "margin": self.margin,
            "tried": self.tried,
            "delta": self.delta.to_dict(),
            "trace": [vars(r) for r in self.trace],
            "warnings": list(self.warnings),
        }


def candidate_seeds(seed, budget):
    """Independent per-candidate seeds derived from the search seed."""
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(budget)]


def search_delta(sys, spec, feedback, grid, T, R, region, eta, k, budget, seed, atoms=3,
                 rel_tol=None, threads=None, radius_range=(0.3, 1.2), resolution=41):
    """Random search for a perturbation that makes every grid trajectory observable.

    Candidate 0 is the zero perturbation; candidates ``1..budget-1`` come from
    :func:`sample_candidate` with seeds spawned from ``seed``. The first
    candidate whose worst Gramian margin ``lambda_min / (trace / n)`` reaches
    ``rel_tol`` is accepted. Without acceptance the best candidate is returned
    with ``accepted = False``.
    """
    rel_tol = config.OBS_REL_TOL if rel_tol is None else rel_tol
    n = sys.n
    if not region.interior_contains_origin():
        raise HypothesisNotMet("0 must be interior to the perturbation region")
    notes = []
    for name, M in (("A", sys.A), ("B", sys.B)):
        if not is_observable_pair(sys.C, M):
            msg = f"(C, {name}) is not observable"
            notes.append(msg)
            warnings.warn(msg, stacklevel=2)
    seeds = candidate_seeds(seed, max(budget - 1, 0))
    best = None
    trace = []
    for i in range(budget):
        delta = BumpPerturbation(n) if i == 0 else sample_candidate(
            seeds[i - 1], R, region, eta, k, atoms, radius_range, resolution)
        norm = norm_k_K(delta, k, region, resolution).value if i else 0.0
        rep = observability_verdict(sys, spec, feedback, None if delta.is_zero else delta, grid, T,
                                    threads=threads, with_jets=False)
        margin = rep.worst_margin
        ok = margin >= rel_tol and all(not p.blowup for p in rep.points)
        trace.append(CandidateRecord(i, float(margin), float(norm), bool(ok)))
        if best is None or margin > best[1]:
            best = (delta, margin)
        if ok:
            return SearchResult(True, delta, float(margin), i + 1, trace, notes)
    return SearchResult(False, best[0], float(best[1]), budget, trace, notes)
