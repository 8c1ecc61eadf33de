"""Compact regions of R^n used as initial-condition sets and norm domains."""
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if len(lo) != len(hi) or not lo:
            raise DimensionError("box corners must have equal positive length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("box needs lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self):
        return len(self.lo)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all((x >= np.array(self.lo)) & (x <= np.array(self.hi)), axis=-1)

    def bounding_box(self):
        return np.array(self.lo), np.array(self.hi)

    def interior_contains_origin(self):
        return all(a < 0.0 < b for a, b in zip(self.lo, self.hi))

    def inner_radius(self):
        """Radius of the largest origin-centred ball inside the box (0 if the origin is outside)."""
        if not self.interior_contains_origin():
            return 0.0
        return float(min(min(-a, b) for a, b in zip(self.lo, self.hi)))

    def to_dict(self):
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Annulus:
    """Spherical shell ``inner <= |x - center| <= outer`` (a ball when ``inner = 0``)."""

    center: tuple
    inner: float
    outer: float

    def __post_init__(self):
        c = tuple(float(x) for x in self.center)
        if not c:
            raise DimensionError("center must be non-empty")
        inner, outer = float(self.inner), float(self.outer)
        if not 0.0 <= inner <= outer or outer <= 0.0:
            raise ValueError("annulus needs 0 <= inner <= outer and outer > 0")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "inner", inner)
        object.__setattr__(self, "outer", outer)

    @property
    def n(self):
        return len(self.center)

    def contains(self, x):
        r = np.linalg.norm(np.asarray(x, dtype=float) - np.array(self.center), axis=-1)
        return (r >= self.inner) & (r <= self.outer)

    def bounding_box(self):
        c = np.array(self.center)
        return c - self.outer, c + self.outer

    def interior_contains_origin(self):
        r = float(np.linalg.norm(self.center))
        return self.inner < r < self.outer or (self.inner == 0.0 and r < self.outer)

    def inner_radius(self):
        if not self.interior_contains_origin():
            return 0.0
        r = float(np.linalg.norm(self.center))
        return min(self.outer - r, r - self.inner) if self.inner > 0 else self.outer - r

    def to_dict(self):
        return {"type": "annulus", "center": list(self.center), "inner": self.inner, "outer": self.outer}


def grid_points(region, resolution):
    """Tensor grid with ``resolution`` points per axis over the bounding box, restricted to the region."""
    lo, hi = region.bounding_box()
    axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
    pts = np.array(list(product(*axes)))
    return pts[region.contains(pts)]


def sample_points(region, count, rng):
    """``count`` uniform samples from the region by rejection from its bounding box."""
    lo, hi = region.bounding_box()
    out = []
    while len(out) < count:
        batch = rng.uniform(lo, hi, size=(max(16, 2 * count), region.n))
        out.extend(batch[region.contains(batch)])
    return np.array(out[:count])


def region_from_dict(d):
    kind = d.get("type")
    if kind == "box":
        return Box(d["lo"], d["hi"])
    if kind == "annulus":
        return Annulus(d["center"], d.get("inner", 0.0), d["outer"])
    raise ValueError(f"unknown region type {kind!r}")
