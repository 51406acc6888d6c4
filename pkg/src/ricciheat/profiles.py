"""Log-conformal factor profiles for planar model geometries.

A profile is a small frozen dataclass so geometry models stay hashable and
can be echoed back into run manifests.  Static profiles are called as
``w(x, y)``; time-dependent families as ``w(x, y, t)`` with a matching
``rate(x, y, t)`` returning the time derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any

import numpy as np


@dataclass(frozen=True)
class ZeroProfile:
    def __call__(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class GaussianBump:
    amplitude: float = 0.1
    width: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    def __call__(self, x, y):
        r2 = (np.asarray(x) - self.center[0]) ** 2 + (np.asarray(y) - self.center[1]) ** 2
        return self.amplitude * np.exp(-r2 / self.width**2)


@dataclass(frozen=True)
class CompactBump:
    """Smooth bump ``a * exp(1 - 1/(1 - (r/radius)^2))`` supported in the open disk."""

    amplitude: float = 0.1
    radius: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    def __call__(self, x, y):
        r2 = ((np.asarray(x) - self.center[0]) ** 2 + (np.asarray(y) - self.center[1]) ** 2) / self.radius**2
        out = np.zeros(np.shape(r2))
        inside = r2 < 1.0
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out


def smooth_step(s):
    """C^inf transition: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Flattened:
    """``base`` multiplied by a smooth cutoff equal to 1 on B_{radius-1} and 0 outside B_radius."""

    base: Any
    radius: float

    def __call__(self, x, y):
        r = np.hypot(x, y)
        return self.base(x, y) * (1.0 - smooth_step(r - (self.radius - 1.0)))


@dataclass(frozen=True)
class SumProfile:
    terms: tuple = ()
    weights: tuple = ()

    def __call__(self, x, y):
        out = np.zeros(np.broadcast(x, y).shape)
        for wgt, term in zip(self.weights, self.terms):
            out = out + wgt * term(x, y)
        return out


@dataclass(frozen=True)
class Breathing:
    """w(x, t) = (1 + depth * sin(rate * t)) * base(x)."""

    base: Any = field(default_factory=GaussianBump)
    depth: float = 0.5
    rate: float = 1.0

    def __call__(self, x, y, t):
        return (1.0 + self.depth * np.sin(self.rate * t)) * self.base(x, y)

    def time_rate(self, x, y, t):
        return self.depth * self.rate * np.cos(self.rate * t) * self.base(x, y)


_PROFILES = {
    "zero": ZeroProfile,
    "gaussian": GaussianBump,
    "compact": CompactBump,
}


def profile_from_dict(spec: dict) -> Any:
    """Build a profile from a config table such as ``{kind = "gaussian", amplitude = 0.1}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind in _PROFILES:
        cls = _PROFILES[kind]
        if "center" in spec:
            spec["center"] = tuple(float(c) for c in spec["center"])
        try:
            return cls(**spec)
        except TypeError as exc:
            raise ValueError(f"bad parameters for profile {kind!r}: {exc}") from None
    if kind == "flattened":
        return Flattened(profile_from_dict(spec.pop("base")), float(spec.pop("radius")))
    if kind == "breathing":
        base = profile_from_dict(spec.pop("base", {"kind": "gaussian"}))
        return Breathing(base, **spec)
    raise ValueError(f"unknown profile kind {kind!r}")


def profile_to_dict(profile: Any) -> dict:
    if isinstance(profile, Flattened):
        return {"kind": "flattened", "base": profile_to_dict(profile.base), "radius": profile.radius}
    if isinstance(profile, Breathing):
        return {"kind": "breathing", "base": profile_to_dict(profile.base),
                "depth": profile.depth, "rate": profile.rate}
    if isinstance(profile, SumProfile):
        return {"kind": "sum", "weights": list(profile.weights),
                "terms": [profile_to_dict(t) for t in profile.terms]}
    for name, cls in _PROFILES.items():
        if type(profile) is cls:
            d = asdict(profile)
            if "center" in d:
                d["center"] = list(d["center"])
            return {"kind": name, **d}
    raise TypeError(f"cannot serialise profile {profile!r}")
