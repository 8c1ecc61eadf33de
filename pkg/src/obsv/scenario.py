"""Strict scenario files: one JSON document describes one experiment.

Unknown keys and inconsistent dimensions are rejected before any
computation. ``load_scenario`` returns the validated model; ``build``
turns it into library objects.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import NotSPDError
from .fields import PolynomialField, check_feedback
from .observers import ObserverSpec
from .regions import Annulus, Box, sample_points
from .state import CoupledState, require_spd
from .systems import BilinearSystem


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Matrix = list[list[float]]


class SystemModel(_Strict):
    A: Matrix
    B: Matrix
    C: Union[Matrix, list[float]]
    b: list[float]


class Term(_Strict):
    exponent: list[Annotated[int, Field(ge=0)]]
    coef: float


class FeedbackModel(_Strict):
    terms: list[Term] = []


class ObserverModel(_Strict):
    kind: Literal["luenberger", "kalman"]
    Q: Optional[Matrix] = None
    xi0: Matrix


class BoxModel(_Strict):
    type: Literal["box"]
    lo: list[float]
    hi: list[float]


class AnnulusModel(_Strict):
    type: Literal["annulus"]
    center: list[float]
    inner: Annotated[float, Field(ge=0)] = 0.0
    outer: Annotated[float, Field(gt=0)]


Region = Annotated[Union[BoxModel, AnnulusModel], Field(discriminator="type")]


class SetsModel(_Strict):
    K1: Region
    K2: Optional[Region] = None
    K3: list[Matrix] = []


class InitialModel(_Strict):
    xhat: list[float]
    eps: list[float]
    xi: Optional[Matrix] = None
    omega: Optional[list[float]] = None


class GridsModel(_Strict):
    initial: list[InitialModel] = []
    random: Annotated[int, Field(ge=0)] = 0
    sphere_resolution: Annotated[int, Field(ge=2)] = 64
    time_grid: Annotated[int, Field(ge=3)] = 201
    output_samples: Annotated[int, Field(ge=2)] = 101


class TolerancesModel(_Strict):
    obs_rel: Annotated[float, Field(gt=0)] = 1e-8
    rtol: Annotated[float, Field(gt=0)] = 1e-10
    atol: Annotated[float, Field(gt=0)] = 1e-12
    jet_kmax: Optional[Annotated[int, Field(ge=0)]] = None


class RecordModel(_Strict):
    """Outcome measured when the fixture was built (for documentation and regression)."""

    accepted: bool
    candidates_tried: Annotated[int, Field(ge=1)]
    margin: float
    baseline_margin: float


class SearchModel(_Strict):
    budget: Annotated[int, Field(ge=1)] = 50
    atoms: Annotated[int, Field(ge=0)] = 3
    radius_range: tuple[Annotated[float, Field(gt=0)], Annotated[float, Field(gt=0)]] = (0.3, 1.2)
    norm_resolution: Annotated[int, Field(ge=3)] = 41
    record: Optional[RecordModel] = None


class IdentitiesModel(_Strict):
    systems: Annotated[int, Field(ge=1)] = 10
    n_max: Annotated[int, Field(ge=1)] = 3
    imax: Annotated[int, Field(ge=1)] = 4
    kmax: Annotated[int, Field(ge=0)] = 4
    jet_samples: Annotated[int, Field(ge=0)] = 50
    jet_kmax: Annotated[int, Field(ge=0)] = 6


class Scenario(_Strict):
    name: str = "scenario"
    description: str = ""
    system: SystemModel
    feedback: FeedbackModel = FeedbackModel()
    observer: ObserverModel
    sets: SetsModel
    R: Optional[Annotated[float, Field(gt=0)]] = None
    eta: Optional[Annotated[float, Field(ge=0)]] = None
    k: Optional[Annotated[int, Field(ge=0)]] = None
    T: Annotated[float, Field(gt=0)]
    grids: GridsModel = GridsModel()
    tolerances: TolerancesModel = TolerancesModel()
    search: SearchModel = SearchModel()
    identities: IdentitiesModel = IdentitiesModel()
    seed: Annotated[int, Field(ge=0, lt=2 ** 64)] = 0
    output_dir: str = "out"

    @model_validator(mode="after")
    def _dimensions(self):
        s = self.system
        n = len(s.A)
        if n == 0:
            raise ValueError("A must be non-empty")

        def square(M, name):
            if len(M) != n or any(len(r) != n for r in M):
                raise ValueError(f"{name} must be {n}x{n}")

        square(s.A, "system.A")
        square(s.B, "system.B")
        C = s.C if s.C and isinstance(s.C[0], list) else [s.C]
        if not C or any(len(r) != n for r in C):
            raise ValueError(f"system.C must have {n} columns")
        if len(s.b) != n:
            raise ValueError(f"system.b must have length {n}")
        for t in self.feedback.terms:
            if len(t.exponent) != n:
                raise ValueError(f"feedback exponent {t.exponent} must have length {n}")
        if self.observer.kind == "kalman" and self.observer.Q is None:
            raise ValueError("observer.Q is required for the Kalman observer")
        for name, M in (("observer.Q", self.observer.Q), ("observer.xi0", self.observer.xi0)):
            if M is not None:
                square(M, name)
                _spd(M, name)
        for key in ("K1", "K2"):
            reg = getattr(self.sets, key)
            if reg is None:
                continue
            pts = [reg.lo, reg.hi] if reg.type == "box" else [reg.center]
            if any(len(p) != n for p in pts):
                raise ValueError(f"sets.{key} must live in R^{n}")
            if reg.type == "box" and any(a > b for a, b in zip(reg.lo, reg.hi)):
                raise ValueError(f"sets.{key} needs lo <= hi")
            if reg.type == "annulus" and reg.inner > reg.outer:
                raise ValueError(f"sets.{key} needs inner <= outer")
        for i, M in enumerate(self.sets.K3):
            square(M, f"sets.K3[{i}]")
            _spd(M, f"sets.K3[{i}]")
        for i, ic in enumerate(self.grids.initial):
            for key in ("xhat", "eps", "omega"):
                v = getattr(ic, key)
                if v is not None and len(v) != n:
                    raise ValueError(f"grids.initial[{i}].{key} must have length {n}")
            if ic.xi is not None:
                square(ic.xi, f"grids.initial[{i}].xi")
                _spd(ic.xi, f"grids.initial[{i}].xi")
        if not self.grids.initial and self.grids.random == 0:
            raise ValueError("grids needs initial conditions or a positive random count")
        lo, hi = self.search.radius_range
        if lo > hi:
            raise ValueError("search.radius_range needs lo <= hi")
        if self.feedback.terms:
            f = PolynomialField(n, {tuple(t.exponent): t.coef for t in self.feedback.terms})
            if abs(float(f.value(np.zeros(n)))) > 0:
                raise ValueError("the feedback must vanish at the origin (no constant term)")
        return self


def _spd(M, name):
    try:
        require_spd(np.array(M, dtype=float), name)
    except NotSPDError as exc:
        raise ValueError(str(exc)) from None


class ScenarioError(ValueError):
    """The scenario file cannot be read or does not validate."""


def load_scenario(path):
    """Read and validate a scenario file; raise :class:`ScenarioError` on any problem."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    return parse_scenario(text)


def parse_scenario(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from None
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(str(exc)) from None


def _region(model):
    if model is None:
        return None
    if model.type == "box":
        return Box(model.lo, model.hi)
    return Annulus(model.center, model.inner, model.outer)


@dataclass(frozen=True)
class Experiment:
    """Library objects built from a scenario."""

    scenario: Scenario
    system: BilinearSystem
    feedback: PolynomialField
    observer: ObserverSpec
    K1: object
    K2: object
    grid: tuple

    @property
    def n(self):
        return self.system.n

    @property
    def k(self):
        return 2 * self.n if self.scenario.k is None else self.scenario.k


def initial_grid(sc, sys, spec, K1, K2, seed):
    n = sys.n
    out = []
    for ic in sc.grids.initial:
        xi = spec.xi0 if ic.xi is None else np.array(ic.xi, dtype=float)
        omega = np.zeros(n) if ic.omega is None else np.array(ic.omega, dtype=float)
        out.append(CoupledState(ic.xhat, ic.eps, xi, omega))
    if sc.grids.random:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        xs = sample_points(K1, sc.grids.random, rng)
        es = sample_points(K2, sc.grids.random, rng) if K2 is not None else np.zeros_like(xs)
        for x, e in zip(xs, es):
            out.append(CoupledState(x, e, spec.xi0, np.zeros(n)))
    return tuple(out)


def build(sc, seed=None):
    """Turn a validated scenario into an :class:`Experiment`; ``seed`` overrides the file's seed."""
    s = sc.system
    sys = BilinearSystem(s.A, s.B, s.C, s.b)
    fb = check_feedback(PolynomialField(sys.n, {tuple(t.exponent): t.coef for t in sc.feedback.terms}))
    o = sc.observer
    spec = ObserverSpec(o.kind, o.Q, o.xi0)
    K1 = _region(sc.sets.K1)
    K2 = _region(sc.sets.K2)
    seed = sc.seed if seed is None else seed
    return Experiment(sc, sys, fb, spec, K1, K2, initial_grid(sc, sys, spec, K1, K2, seed))
