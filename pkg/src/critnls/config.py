"""Experiment configuration: JSON schema, embedded defaults and object builders."""
from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import ConfigError
from .nonlinearity import BUILTIN_PROFILES, NonlinearitySpec, spectrum_from_terms
from .profiles import ScatteringDatum
from .spectral import Grid

SCHEMA_VERSION = 1
KINDS = ("coeffs", "simulate", "diagnose", "blowup-sweep")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_dim = {"type": "integer", "enum": [1, 2]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_times = {
    "oneOf": [
        {"type": "array", "items": _num},
        _obj({"start": _pos, "stop": _pos, "count": {"type": "integer", "minimum": 2}},
             ["start", "stop", "count"]),
        _obj({"start": _num, "stop": _num, "count": {"type": "integer", "minimum": 2},
              "spacing": {"enum": ["linear", "geometric"]}}, ["start", "stop", "count", "spacing"]),
    ]
}

SCHEMA = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": list(KINDS)},
        "output_dir": {"type": "string"},
        "nonlinearity": _obj({
            "profile": {"enum": sorted(BUILTIN_PROFILES) + ["custom", "zero"]},
            "d": _dim,
            "n_max": {"type": "integer", "minimum": 0},
            "n_samples": _int_pos,
            "coefficients": {"type": "array", "items": {
                "type": "array", "prefixItems": [{"type": "integer"}, _num, _num], "minItems": 3, "maxItems": 3}},
        }),
        "grid": _obj({"d": _dim, "half_width": _pos, "points_per_axis": _int_pos}),
        "datum": _obj({"kind": {"enum": ["gauss", "bump"]}, "amplitude": _num, "width": _pos}),
        "initial": _obj({
            "type": {"enum": ["zero", "free-datum", "blowup", "gauss", "field"]},
            "eps": _num,
            "k": _pos,
            "R0": _pos,
            "amplitude": _num,
            "width": _pos,
            "phase": _num,
            "path": {"type": "string"},
        }),
        "simulation": _obj({
            "t0": _num,
            "t_end": _num,
            "dt": _obj({"mode": {"enum": ["fixed", "adaptive"]}, "dt": _pos, "cfl": _pos, "dt_max": _pos}),
            "snapshots": _times,
            "caps": _obj({"mass_growth": _pos, "linf": _pos, "nan": {"type": "boolean"}}),
            "boundary_cap": _pos,
            "boundary_growth": _pos,
            "boundary_action": {"enum": ["terminate", "flag"]},
            "dealias": {"type": ["boolean", "null"]},
        }),
        "diagnostics": _obj({
            "trajectory": _obj({
                "source": {"enum": ["path", "manufactured", "free"]},
                "path": {"type": "string"},
                "lam": _num,
                "times": _times,
            }),
            "lambda_grid": _times,
            "probes": {"type": ["array", "null"], "items": {"type": "array", "items": _num}},
            "pairing_times": {"type": "array", "items": _pos},
            "theta_s": _pos,
            "theta_n": _pos,
            "free_tol": _pos,
        }),
        "sweep": _obj({
            "eps": _times,
            "k": _pos,
            "R0": _pos,
            "theta": _pos,
            "check_lemma51": {"type": "boolean"},
            "synthetic": {"oneOf": [
                {"type": "null"},
                _obj({"law": {"const": "power"}, "exponent": _num}, ["law", "exponent"]),
                _obj({"law": {"const": "exp"}, "rate": _num}, ["law", "rate"]),
            ]},
        }),
    },
    ["schema_version", "kind"],
)

DEFAULTS: dict[str, Any] = {
    "nonlinearity": {"profile": "gauge", "d": 1, "n_max": 64, "n_samples": 4096, "coefficients": []},
    "grid": {"d": 1, "half_width": 64.0, "points_per_axis": 1024},
    "datum": {"kind": "gauss", "amplitude": 0.1, "width": 0.5},
    "initial": {"type": "free-datum", "eps": 1.0, "k": 1.0, "R0": 1.0, "amplitude": 1.0, "width": 1.0,
                "phase": 0.0, "path": ""},
    "simulation": {
        "t0": 0.0,
        "t_end": 1.0,
        "dt": {"mode": "adaptive", "dt": 0.01, "cfl": 0.1, "dt_max": 0.1},
        "snapshots": [],
        "caps": {"mass_growth": 1e3, "linf": 1e6, "nan": True},
        "boundary_cap": 1e-8,
        "boundary_growth": 2.0,
        "boundary_action": "terminate",
        "dealias": None,
    },
    "diagnostics": {
        "trajectory": {"source": "path", "path": "", "lam": 0.0, "times": []},
        "lambda_grid": {"start": -2.0, "stop": 2.0, "count": 41, "spacing": "linear"},
        "probes": None,
        "pairing_times": [],
        "theta_s": 0.05,
        "theta_n": 0.2,
        "free_tol": 0.02,
    },
    "sweep": {"eps": [], "k": 0.75, "R0": 1.0, "theta": 2.0, "check_lemma51": True, "synthetic": None},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in ("synthetic",):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve(doc: dict) -> dict:
    """Validate ``doc`` and return it with every default filled in."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None
    full = _merge(DEFAULTS, doc)
    full["schema_version"] = SCHEMA_VERSION
    d = full["nonlinearity"]["d"]
    if "grid" in doc and "d" in doc["grid"] and doc["grid"]["d"] != d:
        raise ConfigError("grid.d and nonlinearity.d disagree")
    full["grid"]["d"] = d
    if full["nonlinearity"]["profile"] == "custom" and not full["nonlinearity"]["coefficients"]:
        raise ConfigError("profile 'custom' needs a non-empty coefficients list")
    if full["nonlinearity"]["profile"] == "resq" and d != 2:
        raise ConfigError("profile 'resq' requires d = 2")
    return full


def load(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return resolve(doc)


def expand_times(spec) -> np.ndarray:
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    spacing = spec.get("spacing", "geometric")
    if spacing == "geometric":
        if spec["start"] <= 0 or spec["stop"] <= 0:
            raise ConfigError("geometric spacing needs positive endpoints")
        return np.geomspace(spec["start"], spec["stop"], spec["count"])
    return np.linspace(spec["start"], spec["stop"], spec["count"])


def build_nonlinearity(cfg: dict) -> NonlinearitySpec:
    nl = cfg["nonlinearity"]
    d = nl["d"]
    prof = nl["profile"]
    if prof == "zero":
        return NonlinearitySpec.zero(d)
    if prof == "custom":
        terms = {int(n): complex(re, im) for n, re, im in nl["coefficients"]}
        return NonlinearitySpec.from_spectrum(spectrum_from_terms(d, terms))
    try:
        return NonlinearitySpec.from_id(prof, d, nl["n_max"], nl["n_samples"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    try:
        return Grid(g["d"], g["half_width"], g["points_per_axis"])
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def build_datum(cfg: dict) -> ScatteringDatum:
    dt = cfg["datum"]
    d = cfg["nonlinearity"]["d"]
    if dt["kind"] == "gauss":
        return ScatteringDatum.gauss(d, dt["amplitude"], dt["width"])
    return ScatteringDatum.bump(d, dt["amplitude"], dt["width"])


def config_path_dir(path) -> Path:
    return Path(path).resolve().parent
