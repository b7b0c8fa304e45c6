"""Run configuration: JSON schema, defaults and override layering.

Precedence, highest first: command-line flag, environment variable
(``MMFOU_<flag name>``), config file, built-in default.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ValidationError
from .model import (
    EXACT,
    SMALL_LAG,
    ConsistencyWarning,
    ParameterSpace,
    ParameterVector,
    lambda_consistency_bound,
)
from .simulate import INIT_MODES, STATIONARY, SimulationConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ENV_PREFIX = "MMFOU_"
# flag name -> (config key, type); env var is ENV_PREFIX + flag name, case kept
OVERRIDES = {
    "seed": ("seed", int),
    "jobs": ("jobs", int),
    "out": ("out", str),
    "mode": ("mode", str),
    "n": ("n", int),
    "N": ("N", int),
    "m": ("m", int),
    "T": ("T", float),
}
LAMBDA_SYMBOLS = {"exp_psi_1": lambda: lambda_consistency_bound(0.0)}

_pos_int = {"type": "integer", "minimum": 1}
_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "n": _pos_int,
        "lambda": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                             {"enum": sorted(LAMBDA_SYMBOLS)}]},
        "H": {"type": "array", "minItems": 1,
              "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "sigma": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "space": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lambda_bounds": _pair, "H_bounds": _pair, "sigma_bounds": _pair},
        },
        "N": _pos_int,
        "T": {"type": "number", "exclusiveMinimum": 0},
        "init_mode": {"enum": list(INIT_MODES)},
        "burn_in": {"type": ["number", "null"], "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "mode": {"enum": [EXACT, SMALL_LAG, "small-lag"]},
        "jobs": _pos_int,
        "out": {"type": ["string", "null"]},
        "Ns": {"type": "array", "minItems": 1, "items": _pos_int},
        "m": {"type": "integer", "minimum": 2},
        "estimator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_starts": _pos_int,
                "ftol": {"type": "number", "exclusiveMinimum": 0},
                "xtol": {"type": "number", "exclusiveMinimum": 0},
                "maxiter": _pos_int,
            },
        },
        "asymptotics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_P": _pos_int,
                "form": {"enum": ["isserlis", "verbatim"]},
            },
        },
        "check": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alphas": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
    },
}

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "lambda": "exp_psi_1",
    "N": 1000,
    "T": 1.0,
    "init_mode": STATIONARY,
    "burn_in": None,
    "mode": SMALL_LAG,
    "jobs": 1,
    "out": None,
    "Ns": [200, 600, 1000],
    "m": 500,
    "estimator": {"n_starts": 8, "ftol": 1e-10, "xtol": 1e-9, "maxiter": 5000},
    "asymptotics": {"tol": 1e-12, "max_P": 100_000, "form": "isserlis"},
    "check": {},
}


def _default_theta(n: int):
    # n = 3 gives (0.3, 0.5, 0.7) and (0.5, 1, 1.5); n = 1 the classical OU case
    if n == 1:
        return [0.5], [1.0]
    return np.linspace(0.3, 0.7, n).round(12).tolist(), np.linspace(0.5, 1.5, n).round(12).tolist()


def _validate(doc: dict, where: str):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        key = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ValidationError(f"{where}: key '{key}': {e.message}")


@dataclass(frozen=True)
class RunConfig:
    theta: ParameterVector
    space: ParameterSpace
    simulation: SimulationConfig
    seed: int
    mode: str
    jobs: int
    out: str | None
    Ns: tuple
    m: int
    estimator: dict
    asymptotics: dict
    check: dict
    lambda_spec: object = None

    @property
    def n(self) -> int:
        return self.theta.n

    @property
    def T(self) -> float:
        return self.simulation.T

    @property
    def N(self) -> int:
        return self.simulation.N

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.theta.n,
            "lambda": self.theta.lam,
            "H": list(self.theta.H),
            "sigma": list(self.theta.sigma),
            "space": {
                "lambda_bounds": list(self.space.lambda_bounds),
                "H_bounds": list(self.space.H_bounds),
                "sigma_bounds": list(self.space.sigma_bounds),
            },
            "N": self.simulation.N,
            "T": self.simulation.T,
            "init_mode": self.simulation.init_mode,
            "burn_in": self.simulation.burn_in,
            "seed": self.seed,
            "mode": self.mode,
            "jobs": self.jobs,
            "out": self.out,
            "Ns": list(self.Ns),
            "m": self.m,
            "estimator": dict(self.estimator),
            "asymptotics": dict(self.asymptotics),
            "check": copy.deepcopy(self.check),
        }


def env_overrides(environ=None) -> dict:
    """Overrides from ``MMFOU_<flag>`` variables, e.g. ``MMFOU_seed``, ``MMFOU_N``."""
    environ = os.environ if environ is None else environ
    out = {}
    for flag, (key, typ) in OVERRIDES.items():
        raw = environ.get(ENV_PREFIX + flag)
        if raw is None or raw == "":
            continue
        try:
            out[key] = typ(raw)
        except ValueError as exc:
            raise ValidationError(f"environment {ENV_PREFIX}{flag}={raw!r} is not a valid {typ.__name__}") from exc
    return out


def load_document(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file {p} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {p} is not valid JSON: {exc}") from exc


def parse_config(source=None, overrides: dict | None = None, environ=None,
                 require_seed: bool = True) -> RunConfig:
    """Validated RunConfig from a file path or dict, with overrides layered on top.

    ``overrides`` are already-typed flag values; ``None`` entries are ignored.
    """
    if source is None:
        doc = {}
    elif isinstance(source, dict):
        doc = copy.deepcopy(source)
    else:
        doc = load_document(source)
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    _validate(doc, "config")

    layered = copy.deepcopy(doc)
    layered.update(env_overrides(environ))
    layered.update({k: v for k, v in (overrides or {}).items() if v is not None})
    _validate(layered, "overrides")

    merged = copy.deepcopy(DEFAULTS)
    for k, v in layered.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = {**merged[k], **v}
        else:
            merged[k] = v

    if merged.get("seed") is None:
        if require_seed:
            raise ValidationError("no seed: pass --seed, set MMFOU_seed, or put 'seed' in the config")
        merged["seed"] = 0

    # theta
    n = merged.get("n")
    H, sigma = merged.get("H"), merged.get("sigma")
    if H is None and sigma is None:
        n = 3 if n is None else n
        H, sigma = _default_theta(n)
    elif H is None or sigma is None:
        raise ValidationError("config must give both 'H' and 'sigma' or neither")
    if len(H) != len(sigma):
        raise ValidationError(f"'H' has {len(H)} entries but 'sigma' has {len(sigma)}")
    if n is not None and n != len(H):
        raise ValidationError(f"'n'={n} disagrees with {len(H)} entries in 'H'")
    lam_spec = merged["lambda"]
    lam = LAMBDA_SYMBOLS[lam_spec]() if isinstance(lam_spec, str) else float(lam_spec)
    theta = ParameterVector(lam, tuple(H), tuple(sigma))
    if theta.reordered:
        msg = "H was not ascending; components reordered to canonical form"
        warnings.warn(msg, UserWarning, stacklevel=2)
        log.warning(msg)
    bound = lambda_consistency_bound(min(theta.H))
    if lam >= bound:
        warnings.warn(
            f"lambda={lam:.6g} >= exp(Psi(2*min(H)+1))={bound:.6g}: consistency is not guaranteed",
            ConsistencyWarning, stacklevel=2,
        )

    sp = merged.get("space", {})
    H_bounds = tuple(sp.get("H_bounds", (0.05, 0.95)))
    sigma_bounds = tuple(sp.get("sigma_bounds", (1e-3, 1e3)))
    lambda_bounds = tuple(sp.get("lambda_bounds", (1e-3, lambda_consistency_bound(H_bounds[0]))))
    space = ParameterSpace(theta.n, lambda_bounds, H_bounds, sigma_bounds)

    sim = SimulationConfig(N=merged["N"], T=float(merged["T"]), seed=merged["seed"],
                           init_mode=merged["init_mode"], burn_in=merged["burn_in"])
    mode = SMALL_LAG if merged["mode"] == "small-lag" else merged["mode"]
    if not all(math.isfinite(v) for v in theta.as_array()):
        raise ValidationError("theta must be finite")
    return RunConfig(
        theta=theta,
        space=space,
        simulation=sim,
        seed=int(merged["seed"]),
        mode=mode,
        jobs=int(merged["jobs"]),
        out=merged["out"],
        Ns=tuple(merged["Ns"]),
        m=int(merged["m"]),
        estimator=dict(merged["estimator"]),
        asymptotics=dict(merged["asymptotics"]),
        check=copy.deepcopy(merged["check"]),
        lambda_spec=lam_spec,
    )
