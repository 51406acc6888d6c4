"""Strict TOML experiment configuration.

Every table has a fixed key set; unknown keys, wrong types and
non-positive numbers are rejected before any computation, with the line
and column of the offending entry.
"""

from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import ConformalPlaneFlow, FlatEuclidean, PrescribedFamily, SphereBackwardFlow
from .profiles import profile_from_dict, profile_to_dict

KINDS = ("maxprin", "green", "gaussian", "convseq", "oracle")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        where = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(message + where)
        self.line, self.col = line, col


# key -> (type, required) ; numbers must be positive unless listed in NONNEG
_GEOMETRY = {
    "flat": {"model": str, "n": int, "radius": float, "resolution": int, "layout": str},
    "sphere": {"model": str, "resolution": int},
    "conformal": {"model": str, "extent": float, "resolution": int, "dt": float,
                  "curvature_guard": float, "w0": dict},
    "prescribed": {"model": str, "extent": float, "resolution": int, "w": dict},
}
_SOLVER = {"T": float, "dt_max": float, "explicit_steps": int, "ratio": float, "mass_tol": float}
_SUITE = {
    "oracle": {"ball_radius": float, "probe_radius": float, "tau_max": float, "rel_tol": float,
               "brute_cells": int, "brute_T": float},
    "green": {"ks": list, "gap_tol": float, "probe_tol": float},
    "gaussian": {"ball_radius": float, "D_min": float, "D_max": float, "D_count": int,
                 "max_ratio": float, "tau_min": float, "holdout_limit": float},
    "maxprin": {"seeds": int, "alpha1": float, "alpha2": float, "lam": float, "R": float,
                "ball_radius": float, "windows": int},
    "convseq": {"psi": dict, "count": int, "radii": list, "alpha": float, "probe_radius": float,
                "delta_tol": float, "ball_radius": float, "curvature_bound": float},
}
_TOP = {"kind": str, "seed": int, "out": str, "geometry": dict, "solver": dict, "suite": dict}
NONNEG = {"seed", "explicit_steps", "alpha1", "alpha2"}

_DEFAULT_SOLVER = {"T": 1.0, "dt_max": 1.0 / 200, "explicit_steps": 128, "ratio": 1.02, "mass_tol": 1e-10}


def _locate(text: str, path: tuple[str, ...]) -> tuple[int | None, int | None]:
    """Best-effort source position of a dotted key path."""
    *tables, key = path
    header = ".".join(tables)
    current = ""
    for ln, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\[\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            continue
        m = re.match(r"^\s*([A-Za-z0-9_\-\.]+)\s*=", line)
        if m:
            full = (current + "." if current else "") + m.group(1)
            if full == ".".join(path) or (current == header and m.group(1) == key):
                return ln, line.index(m.group(1)) + 1
    return None, None


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    geometry: dict
    solver: dict
    suite: dict
    out: str | None = None
    source: str = field(default="", repr=False)
    path: str | None = None

    def canonical(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "geometry": self.geometry,
                "solver": self.solver, "suite": self.suite}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def model(self):
        return build_model(self.geometry)


def build_model(g: dict):
    g = dict(g)
    kind = g.pop("model")
    if kind == "flat":
        return FlatEuclidean(**g)
    if kind == "sphere":
        return SphereBackwardFlow(**g)
    if kind == "conformal":
        w0 = profile_from_dict(g.pop("w0", {"kind": "zero"}))
        return ConformalPlaneFlow(w0, **g)
    if kind == "prescribed":
        w = profile_from_dict(g.pop("w", {"kind": "breathing"}))
        return PrescribedFamily(w, **g)
    raise ConfigError(f"unknown geometry model {kind!r}")


def _check_table(text: str, table: dict, schema: dict, prefix: tuple[str, ...]):
    for key, val in table.items():
        pos = _locate(text, prefix + (key,))
        if key not in schema:
            raise ConfigError(f"unknown key {'.'.join(prefix + (key,))!r}", *pos)
        typ = schema[key]
        ok = isinstance(val, typ) and not (typ is int and isinstance(val, bool))
        if typ is float and isinstance(val, int) and not isinstance(val, bool):
            ok = True
        if not ok:
            raise ConfigError(f"{'.'.join(prefix + (key,))} must be of type {typ.__name__}", *pos)
        if typ in (int, float) and key not in NONNEG and val <= 0:
            raise ConfigError(f"{'.'.join(prefix + (key,))} must be positive", *pos)
        if typ in (int, float) and key in NONNEG and val < 0:
            raise ConfigError(f"{'.'.join(prefix + (key,))} must be nonnegative", *pos)
        if typ is list:
            if not val or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in val):
                raise ConfigError(f"{'.'.join(prefix + (key,))} must be a list of positive numbers", *pos)


def _normalise(table: dict, schema: dict) -> dict:
    out = {}
    for k, v in table.items():
        out[k] = float(v) if schema[k] is float else ([float(x) for x in v] if schema[k] is list else v)
    return out


def parse_config(text: str, path: str | None = None) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        if line is None:
            m = re.search(r"line (\d+), column (\d+)", str(exc))
            line, col = (int(m.group(1)), int(m.group(2))) if m else (text.count("\n") + 1, None)
        raise ConfigError(f"syntax error: {str(exc).split(' (at')[0]}", line, col) from None
    _check_table(text, data, _TOP, ())
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}", *_locate(text, ("kind",)))
    geo = data.get("geometry")
    if geo is None:
        raise ConfigError("missing [geometry] table")
    model = geo.get("model")
    if model not in _GEOMETRY:
        raise ConfigError(f"geometry.model must be one of {', '.join(_GEOMETRY)}", *_locate(text, ("geometry", "model")))
    _check_table(text, geo, _GEOMETRY[model], ("geometry",))
    solver = data.get("solver", {})
    _check_table(text, solver, _SOLVER, ("solver",))
    suite = data.get("suite", {})
    _check_table(text, suite, _SUITE[kind], ("suite",))
    geometry = _normalise(geo, _GEOMETRY[model])
    for key in ("w0", "w"):
        if key in geometry:
            try:
                profile_from_dict(geometry[key])
            except (ValueError, TypeError, KeyError) as exc:
                raise ConfigError(f"geometry.{key}: {exc}", *_locate(text, ("geometry", key, "kind"))) from None
    cfg = ExperimentConfig(
        kind=kind,
        seed=int(data.get("seed", 0)),
        geometry=geometry,
        solver={**_DEFAULT_SOLVER, **_normalise(solver, _SOLVER)},
        suite=_normalise(suite, _SUITE[kind]),
        out=data.get("out"),
        source=text,
        path=path,
    )
    try:
        cfg.model()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid geometry: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    return parse_config(p.read_text(), str(p))


def apply_override(cfg: ExperimentConfig, assignment: str) -> ExperimentConfig:
    """Apply ``section.key=value`` (value in TOML syntax) and re-validate."""
    key, sep, value = assignment.partition("=")
    if not sep:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    try:
        parsed = tomllib.loads(f"v = {value.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value.strip()
    data = json.loads(json.dumps(cfg.canonical()))
    if cfg.out is not None:
        data["out"] = cfg.out
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = parsed
    return parse_config(_dump_toml(data), cfg.path)


def _value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k} = {_value(x)}" for k, x in v.items()) + "}"
    return str(v)


def _dump_toml(data: dict) -> str:
    lines = [f"{k} = {_value(v)}" for k, v in data.items() if not isinstance(v, dict)]
    for k, v in data.items():
        if isinstance(v, dict):
            lines.append(f"[{k}]")
            lines += [f"{kk} = {_value(vv)}" for kk, vv in v.items()]
    return "\n".join(lines) + "\n"


def model_record(model) -> dict:
    """JSON-friendly description of a geometry model."""
    out = {"model": model.kind}
    for name in ("n", "radius", "resolution", "layout", "extent", "dt"):
        if hasattr(model, name):
            out[name] = getattr(model, name)
    if hasattr(model, "w0"):
        out["w0"] = profile_to_dict(model.w0)
    return out
