"""Scenario configuration: TOML parsing, presets and hypothesis validation.

A config is a TOML document with the sections ``[grid]``, ``[sobolev]``,
``[sigma]``, ``[drift]``, ``[run]`` and optional check-specific tables.  A
top-level ``preset = "<name>"`` loads a shipped scenario first; every key
given explicitly overrides it.  Example::

    preset = "weierstrass-kernel"

    [run]
    M = 20000
    seed = 7
    checks = ["heatkernel", "krylov"]

Numbers are read as 64-bit floats; integer-valued fields (``d``, ``N``,
``M``, ``seed``) must hold integral values.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from .drift import DRIFT_KINDS, ClosedFormDrift
from .hypotheses import exponent_violations

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "PRESETS",
    "CHECKS",
    "load_config",
    "parse_config",
    "validate",
    "config_hash",
]

CHECKS = (
    "zvonkin",
    "apriori",
    "heatkernel",
    "krylov",
    "compare-laws",
    "oracle",
    "ergodicity",
    "moments",
    "young",
    "gronwall",
    "inequalities",
)

_BASE = {
    "grid": {"d": 1, "L": 16.0, "N": 1024},
    "sobolev": {"alpha": 0.45, "p": 4.0, "beta": 0.9, "q": 8.0},
    "sigma": {"scale": 1.0},
    "drift": {"b1": "zero", "kappa": 1.0, "b2": "zero", "amplitude": 1.0, "cutoff_radius": 4.0},
    "run": {"x0": 0.0, "T": 1.0, "dt": 2.0**-10, "M": 100_000, "seed": 0, "pipeline": "mollified", "checks": []},
    "heatkernel": {"times": [0.25, 1.0, 4.0], "region_mult": 3.0},
    "apriori": {"N": 65536, "terms": 13, "lambdas": [256.0, 512.0, 1024.0, 2048.0, 4096.0]},
    "krylov": {"M": 2000, "T": 1.0, "pairs": 24},
    "compare-laws": {"dt": 2.0**-12, "t": 1.0, "n_perm": 200},
    "oracle": {"interval": [-1.0, 1.0], "x0": 0.3, "T": 400.0, "pipeline": "transformed"},
    "ergodicity": {"M": 50, "T": 2000.0, "dt": 2.0**-12, "burn_in": 200.0, "bandwidth": 0.01, "window_L": 8.0, "window_N": 2048},
    "moments": {"horizons": [1.0, 2.0, 4.0, 8.0], "M": 10_000, "pairs": 24, "increment_dt": 2.0**-12},
    "young": {"hurst": [0.75, 0.75], "levels": 12, "M": 2000},
    "gronwall": {"pairs": [[0.5, 0.25], [0.75, 0.5]], "M": 10_000, "steps": 1000},
    "inequalities": {"trials": 100, "N": 256, "L": 8.0},
}

PRESETS = {
    "trivial": {
        "drift": {"b1": "zero", "b2": "zero"},
        "run": {"dt": 2.0**-8, "checks": ["heatkernel", "moments", "young", "gronwall", "inequalities"]},
    },
    "ou": {
        "drift": {"b1": "linear", "kappa": 1.0, "b2": "zero"},
        "run": {"checks": ["heatkernel", "moments"]},
    },
    "weierstrass-kernel": {
        "drift": {"b1": "saturating", "kappa": 1.0, "b2": "weierstrass"},
        "run": {"checks": ["zvonkin", "apriori", "heatkernel", "krylov", "compare-laws", "oracle"]},
    },
    "weierstrass-ergodic": {
        "sigma": {"scale": math.sqrt(2.0)},
        "drift": {"b1": "linear", "kappa": 1.0, "b2": "weierstrass"},
        "run": {"T": 8.0, "checks": ["ergodicity", "moments"]},
    },
}

_INT_KEYS = {("grid", "d"), ("grid", "N"), ("run", "M"), ("run", "seed"), ("apriori", "N"), ("apriori", "terms"),
             ("krylov", "M"), ("krylov", "pairs"), ("compare-laws", "n_perm"), 
             ("ergodicity", "M"), ("ergodicity", "window_N"), ("moments", "M"), ("moments", "pairs"),
             ("young", "levels"), ("young", "M"), ("gronwall", "M"), ("gronwall", "steps"),
             ("inequalities", "trials"), ("inequalities", "N")}


class ConfigError(ValueError):
    """Unreadable or structurally invalid configuration."""


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict):
            if key not in out or not isinstance(out[key], dict):
                raise ConfigError(f"unknown section [{where}{key}]")
            out[key] = _merge(out[key], val, f"{where}{key}.")
        else:
            if where and key not in out:
                raise ConfigError(f"unknown key {where}{key}")
            out[key] = val
    return out


def _coerce(cfg: dict) -> dict:
    for section, table in cfg.items():
        if not isinstance(table, dict):
            continue
        for key, val in table.items():
            if (section, key) in _INT_KEYS:
                if isinstance(val, bool) or not isinstance(val, (int, float)) or float(val) != int(val):
                    raise ConfigError(f"{section}.{key} must be an integer, got {val!r}")
                table[key] = int(val)
            elif isinstance(val, bool) or isinstance(val, str):
                continue
            elif isinstance(val, (int, float)):
                table[key] = float(val)
    return cfg


def parse_config(text: str) -> dict:
    """Parse TOML text into a complete config dict (preset merged, numerics coerced).

    Raises
    ------
    ConfigError
        TOML syntax errors (with line and column), unknown presets, sections or keys.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return _resolve(raw)


def _resolve(raw: dict) -> dict:
    raw = dict(raw)
    preset = raw.pop("preset", None)
    cfg = copy.deepcopy(_BASE)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = _merge(cfg, PRESETS[preset])
    cfg = _merge(cfg, raw)
    cfg["preset"] = preset
    return _coerce(cfg)


def load_config(path) -> dict:
    """Read a TOML config, or the config embedded in a run manifest (``.json``)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            manifest = json.loads(text)
            raw = manifest["config"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path} is not a run manifest: {exc}") from exc
        raw = {k: v for k, v in raw.items() if k != "preset"}
        return _coerce(_merge(copy.deepcopy(_BASE), raw) | {"preset": manifest["config"].get("preset")})
    return parse_config(text)


def config_hash(cfg: dict) -> str:
    """Short SHA-256 of the canonical JSON form."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def validate(cfg: dict, strict: bool = False) -> list:
    """All violated hypotheses and structural problems; empty when runnable.

    Never raises on a parsed config: malformed values become violations.
    ``strict`` adds the narrower exponent window for weak solutions.
    """
    out = []
    try:
        g, s = cfg["grid"], cfg["sobolev"]
        d = g["d"]
        if d not in (1, 2):
            out.append(f"grid: d must be 1 or 2, got {d}")
        N = g["N"]
        if N < 32 or N & (N - 1):
            out.append(f"grid: N must be a power of two >= 32, got {N}")
        if not g["L"] > 0:
            out.append(f"grid: L must be positive, got {g['L']}")
        out.extend(exponent_violations(s["alpha"], s["p"], s["beta"], s["q"], d, strict=strict))
        scale = cfg["sigma"]["scale"]
        if not scale > 0 or not math.isfinite(scale):
            out.append(f"sigma: ellipticity fails for scale {scale}")
        dr = cfg["drift"]
        if dr["b1"] not in DRIFT_KINDS:
            out.append(f"drift: unknown b1 {dr['b1']!r}")
        elif dr["b1"] != "zero":
            if not dr["kappa"] > 0:
                out.append(f"drift: kappa must be positive, got {dr['kappa']}")
            elif ClosedFormDrift(dr["b1"], dr["kappa"]).check_dissipativity(d) > 1e-9:
                out.append("drift: dissipativity inequalities fail for b1")
        if dr["b2"] not in ("zero", "weierstrass"):
            out.append(f"drift: unknown b2 source {dr['b2']!r}")
        elif dr["b2"] == "weierstrass" and not 0 < 2 * dr["cutoff_radius"] <= g["L"] / 2:
            out.append(f"drift: cutoff support 2R={2 * dr['cutoff_radius']:g} exceeds L/2={g['L'] / 2:g}")
        r = cfg["run"]
        if not (r["T"] > 0 and r["dt"] > 0) or abs(round(r["T"] / r["dt"]) * r["dt"] - r["T"]) > 1e-9 * r["T"]:
            out.append(f"run: T={r['T']} must be a positive multiple of dt={r['dt']}")
        if r["M"] < 1:
            out.append(f"run: M must be positive, got {r['M']}")
        if not 0 <= r["seed"] < 2**64:
            out.append(f"run: seed must be an unsigned 64-bit integer, got {r['seed']}")
        for sec in ("run", "oracle"):
            if cfg[sec]["pipeline"] not in ("mollified", "transformed"):
                out.append(f"{sec}: unknown pipeline {cfg[sec]['pipeline']!r}")
        x0 = np.atleast_1d(np.asarray(r["x0"], dtype=float))
        if x0.size not in (1, d):
            out.append(f"run: x0 must have 1 or d={d} entries")
        unknown = [c for c in r["checks"] if c not in CHECKS]
        if unknown:
            out.append(f"run: unknown checks {unknown}; choose from {list(CHECKS)}")
        if dr["b2"] == "zero":
            for c in ("zvonkin", "apriori", "krylov", "compare-laws"):
                if c in r["checks"]:
                    out.append(f"run: check {c!r} needs a distributional drift (b2 = 'weierstrass')")
        if d != 1:
            for c in ("oracle", "ergodicity"):
                if c in r["checks"]:
                    out.append(f"run: check {c!r} is one-dimensional")
        if "ergodicity" in r["checks"]:
            if dr["b1"] != "linear":
                out.append("ergodicity: needs a dissipative b1 with positive growth (b1 = 'linear')")
            e = cfg["ergodicity"]
            if abs(round(e["T"] / e["dt"]) * e["dt"] - e["T"]) > 1e-9 * e["T"] or 1.0 % e["dt"]:
                out.append(f"ergodicity: T={e['T']} and 1 must be multiples of dt={e['dt']}")
            if e["burn_in"] < 0.1 * e["T"]:
                out.append(f"ergodicity: burn-in {e['burn_in']:g} is below 10% of the horizon {e['T']:g}")
    except (KeyError, TypeError, ValueError) as exc:
        out.append(f"config: malformed value ({exc.__class__.__name__}: {exc})")
    return out
