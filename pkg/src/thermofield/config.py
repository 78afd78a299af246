"""TOML run configuration: schema validation and conversion to model objects.

Layout::

    experiment = "overlap-sweep"
    seed = 0
    output = "runs/sweep"

    [model]
    beta = 1.0
    lambda = 0.05
    energies = [0.0, 1.0]

    [[model.coupling]]
    G = "sigma_x"          # or a nested list; optional G_imag
    p = 0.5
    cutoff = 1.0

    [grid]
    kind = "midpoint"      # or "resonant"
    u_max = 4.0
    M = 8

    [truncation]
    n_total_max = 2

    [params]               # experiment specific, see EXPERIMENT_PARAMS

Unknown keys anywhere are rejected with the offending path and, when it can
be located, the line number.
"""
from __future__ import annotations

import copy
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .fock import BathGrid, midpoint_grid, resonant_grid
from .model import AtomSpec, CouplingTerm, FormFactor, ModelSpec

EXPERIMENTS = ("validate", "spectrum", "kms", "overlap-sweep", "fgr", "lso", "virial", "evolve",
               "dyson-bound", "dyson-oracle", "wick-test", "pc-probe")

NAMED_MATRICES = {
    "sigma_x": np.array([[0, 1], [1, 0]], dtype=complex),
    "sigma_y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "sigma_z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_TOP_KEYS = {"experiment", "seed", "output", "model", "grid", "truncation", "params"}
_MODEL_KEYS = {"beta", "lambda", "energies", "glue_phase", "coupling"}
_COUPLING_KEYS = {"G", "G_imag", "p", "amplitude", "cutoff", "center", "phase0", "profile",
                  "angular_factor"}
_GRID_KEYS = {"kind", "u_max", "M", "refinement", "k0"}
_TRUNC_KEYS = {"n_total_max"}

# experiment -> {key: default}
EXPERIMENT_PARAMS = {
    "validate": {},
    "spectrum": {"count": 6},
    "kms": {"tol": 1e-10},
    "overlap-sweep": {"betas": [1.0], "lambdas": [0.05], "workers": 1},
    "fgr": {},
    "lso": {"epsilons": [0.2, 0.1, 0.05]},
    "virial": {"nu": 1.5, "e": 0.6, "t": 0.1},
    "evolve": {"T": 10.0, "samples": 200, "observable": "excited"},
    "dyson-bound": {"L": 6.283185307179586, "betas": [1.0, 2.0, 4.0], "lambdas": [0.0, 0.05, 0.1],
                    "two_ms": [2, 4]},
    "dyson-oracle": {"L": 6.283185307179586},
    "wick-test": {"E": 1.0, "points": 4, "trials": 5, "n_max": 40},
    "pc-probe": {"nu": 1.5, "e": 0.6, "t": 0.1, "window": [-0.5, 0.5]},
}


class ConfigError(ValueError):
    def __init__(self, message, path: str = "", line: int | None = None):
        where = path + (f" (line {line})" if line else "")
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


@dataclass
class RunConfig:
    experiment: str
    model: ModelSpec
    grid: BathGrid
    grid_table: dict
    n_total_max: int
    params: dict
    output: str = "thermofield_run"
    seed: int = 0
    raw: dict = field(default_factory=dict)


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _check_keys(table: dict, allowed: set, path: str, text: str | None):
    for k in table:
        if k not in allowed:
            p = f"{path}.{k}" if path else k
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", p,
                              _line_of(text, k))


def _number(table, key, path, text, default=None, kind=float, positive=False):
    if key not in table:
        if default is None:
            raise ConfigError("missing required key", f"{path}.{key}")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", f"{path}.{key}", _line_of(text, key))
    if kind is int and not float(v).is_integer():
        raise ConfigError(f"expected an integer, got {v!r}", f"{path}.{key}", _line_of(text, key))
    v = kind(v)
    if positive and not v > 0:
        raise ConfigError("must be positive", f"{path}.{key}", _line_of(text, key))
    return v


def _matrix(value, path, text, key):
    if isinstance(value, str):
        if value not in NAMED_MATRICES:
            raise ConfigError(f"unknown matrix name {value!r}", path, _line_of(text, key))
        return NAMED_MATRICES[value]
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"matrix must be a name or nested list of numbers ({exc})", path,
                          _line_of(text, key)) from None
    if arr.ndim != 2:
        raise ConfigError("matrix must be two dimensional", path, _line_of(text, key))
    return arr.astype(complex)


def _coupling(table, i, text):
    path = f"model.coupling[{i}]"
    _check_keys(table, _COUPLING_KEYS, path, text)
    if "G" not in table:
        raise ConfigError("missing required key", f"{path}.G")
    G = _matrix(table["G"], f"{path}.G", text, "G")
    if "G_imag" in table:
        Gi = _matrix(table["G_imag"], f"{path}.G_imag", text, "G_imag")
        if Gi.shape != G.shape:
            raise ConfigError("G_imag shape differs from G", f"{path}.G_imag")
        G = G + 1j * Gi.real
    kw = {}
    for k in ("p", "amplitude", "center", "phase0", "angular_factor"):
        if k in table:
            kw[k] = _number(table, k, path, text)
    if "cutoff" in table:
        c = table["cutoff"]
        kw["cutoff"] = math.inf if c in ("inf", "infinity") else _number(table, "cutoff", path, text)
    if "profile" in table:
        kw["profile"] = str(table["profile"])
    try:
        return CouplingTerm(G, FormFactor(**kw))
    except (ValueError, NotImplementedError) as exc:
        raise ConfigError(str(exc), path) from None


def model_from_table(t: dict, text: str | None = None) -> ModelSpec:
    _check_keys(t, _MODEL_KEYS, "model", text)
    beta = _number(t, "beta", "model", text, positive=True)
    lam = _number(t, "lambda", "model", text, default=0.0)
    energies = t.get("energies", [0.0, 1.0])
    couplings = t.get("coupling", [])
    if isinstance(couplings, dict):
        couplings = [couplings]
    terms = [_coupling(c, i, text) for i, c in enumerate(couplings)]
    try:
        return ModelSpec(AtomSpec(tuple(energies)), tuple(terms), beta, lam,
                         glue_phase_override=t.get("glue_phase"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "model") from None


def grid_from_table(t: dict, spec: ModelSpec | None = None, text: str | None = None) -> BathGrid:
    _check_keys(t, _GRID_KEYS, "grid", text)
    kind = t.get("kind", "midpoint")
    M = _number(t, "M", "grid", text, kind=int, positive=True)
    try:
        if kind == "midpoint":
            return midpoint_grid(_number(t, "u_max", "grid", text, positive=True), M,
                                 _number(t, "refinement", "grid", text, default=0, kind=int))
        if kind == "resonant":
            bohr = spec.atom.gap if spec is not None else 1.0
            k0 = t.get("k0")
            return resonant_grid(bohr, M, None if k0 is None else int(k0))
    except ValueError as exc:
        raise ConfigError(str(exc), "grid") from None
    raise ConfigError(f"unknown grid kind {kind!r}", "grid.kind", _line_of(text, "kind"))


def from_dict(raw: dict, text: str | None = None) -> RunConfig:
    _check_keys(raw, _TOP_KEYS, "", text)
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}", "experiment",
                          _line_of(text, "experiment"))
    if "model" not in raw:
        raise ConfigError("missing [model] table", "model")
    spec = model_from_table(raw["model"], text)
    gt = raw.get("grid", {"kind": "midpoint", "u_max": 4.0, "M": 8})
    grid = grid_from_table(gt, spec, text)
    tt = raw.get("truncation", {})
    _check_keys(tt, _TRUNC_KEYS, "truncation", text)
    n = _number(tt, "n_total_max", "truncation", text, default=2, kind=int)
    if n < 0:
        raise ConfigError("must be nonnegative", "truncation.n_total_max")
    defaults = EXPERIMENT_PARAMS[exp]
    params = dict(defaults)
    given = raw.get("params", {})
    _check_keys(given, set(defaults), "params", text)
    params.update(given)
    seed = _number(raw, "seed", "", text, default=0, kind=int) if "seed" in raw else 0
    return RunConfig(exp, spec, grid, dict(gt), n, params, str(raw.get("output", "thermofield_run")),
                     seed, raw)


def loads(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    return from_dict(raw, text)


def load(path) -> RunConfig:
    return loads(Path(path).read_text())


def apply_overrides(raw: dict, overrides) -> dict:
    """``key.sub=value`` strings (values parsed as TOML scalars/arrays) onto ``raw``."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        try:
            parsed = tomllib.loads(f"v = {val}")["v"]
        except tomllib.TOMLDecodeError:
            parsed = val
        node = out
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = parsed
    return out

