"""JSON run configurations and report schema."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from .errors import DomainError
from .flow import InitialDataSpec, Perturbation, StepController

EXPERIMENTS = ("oracle", "shrinker", "weighted", "long_lived")
BASES = ("cylinder", "barenblatt", "smooth", "singular")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "yfs run configuration",
    "type": "object",
    "required": ["experiment", "dim", "T", "base_profile"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1, "pattern": "^[A-Za-z0-9_.-]+$"},
        "experiment": {"enum": list(EXPERIMENTS)},
        "dim": {"type": "integer", "minimum": 3},
        "beta": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "base_profile": {"enum": list(BASES)},
        "amp": {"type": "number", "exclusiveMinimum": 0},
        "bound_amp": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "tail_sign": {"enum": [-1, 1, None]},
        "perturbation": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["bump", "noise"]},
                        "mass": {"type": "number"},
                        "center": {"type": "number", "exclusiveMinimum": 0},
                        "width": {"type": "number", "exclusiveMinimum": 0},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
            ]
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "r_in": {"type": "number", "minimum": 0},
                "r_max": {"type": "number", "exclusiveMinimum": 0},
                "points": {"type": "integer", "minimum": 16},
                "r_first": {"type": "number", "exclusiveMinimum": 0},
                "outer": {"enum": ["exact", "tail"]},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scheme": {"enum": ["be", "bdf2"]},
                "frac": {"type": "number", "exclusiveMinimum": 0},
                "dt_max": {"type": "number", "exclusiveMinimum": 0},
                "dt_min": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "checks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "tau": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "tail_times": {"type": "array", "items": {"type": "number"}},
                "post_times": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "sup_radius": {"type": "number", "exclusiveMinimum": 0},
                "far_window": {"type": "array", "items": {"type": "number"}, "minItems": 2,
                               "maxItems": 2},
                "annulus": {"type": "array", "items": {"type": "number"}, "minItems": 2,
                            "maxItems": 2},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "refine": {"type": "boolean"},
                "extinction": {"type": "boolean"},
                "curvature": {"type": "boolean"},
                "sensitivity": {"type": "boolean"},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "snapshots": {"type": "boolean"},
                "distances": {"type": "boolean"},
                "curvature": {"type": "boolean"},
            },
        },
    },
}

CHECK_SCHEMA = {
    "type": "object",
    "required": ["name", "measured", "expected", "tolerance", "pass", "source"],
    "properties": {
        "name": {"type": "string"},
        "measured": {"type": ["number", "string", "null"]},
        "expected": {"type": ["number", "string", "null"]},
        "tolerance": {"type": ["number", "string", "null"]},
        "pass": {"type": "boolean"},
        "source": {"type": "string", "minLength": 1},
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "yfs experiment report",
    "type": "object",
    "required": ["config", "versions", "checks", "files", "passed"],
    "properties": {
        "config": CONFIG_SCHEMA,
        "versions": {"type": "object", "additionalProperties": {"type": "string"}},
        "checks": {"type": "array", "items": CHECK_SCHEMA},
        "files": {"type": "array", "items": {"type": "string"}},
        "passed": {"type": "boolean"},
        "info": {"type": "object"},
    },
}

DEFAULTS = {
    "grid": {"r_in": 0.0, "r_max": 1e3, "points": 2000, "r_first": 1e-3, "outer": "exact"},
    "solver": {"scheme": "bdf2", "frac": 2e-3, "dt_max": 1e-2, "dt_min": 1e-8},
    "checks": {
        "tail_times": [0.25, 0.5, 0.75],
        "sup_radius": 2.0,
        "annulus": [0.1, 10.0],
        "tolerance": 1e-3,
        "refine": False,
        "extinction": True,
        "curvature": False,
        "sensitivity": False,
    },
    "outputs": {"snapshots": True, "distances": True, "curvature": False},
}


def validate_config(cfg: dict) -> None:
    """Raise :class:`DomainError` when ``cfg`` violates the schema."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DomainError(f"invalid config at {where}: {exc.message}") from exc
    if cfg["base_profile"] in ("smooth", "singular") and cfg.get("beta") is None:
        raise DomainError(f"{cfg['base_profile']} data need beta")


def validate_report(report: dict) -> None:
    jsonschema.validate(report, REPORT_SCHEMA)


@dataclass
class RunConfig:
    """Validated configuration with defaults filled in."""

    raw: dict
    name: str
    experiment: str
    data: InitialDataSpec
    solver: dict
    checks: dict
    outputs: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return self.data.T

    def controller(self, snapshot_times, T_hat: Optional[float] = None) -> StepController:
        s = self.solver
        return StepController(dt_max=s["dt_max"], frac=s["frac"], dt_min=s["dt_min"],
                              T_hat=self.T if T_hat is None else T_hat,
                              snapshot_times=sorted(snapshot_times), scheme=s["scheme"],
                              stop_sup=0.0)

    def with_grid(self, **changes) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw.setdefault("grid", {}).update(changes)
        return load_config(raw)


def _merged(cfg: dict, key: str) -> dict:
    out = dict(DEFAULTS[key])
    out.update(cfg.get(key) or {})
    return out


def load_config(cfg: dict) -> RunConfig:
    """Validate ``cfg`` and build the initial-data spec."""
    validate_config(cfg)
    grid = _merged(cfg, "grid")
    pert = cfg.get("perturbation")
    perturbation = Perturbation(**pert) if pert else None
    spec = InitialDataSpec(
        N=cfg["dim"],
        beta=cfg.get("beta"),
        T=float(cfg["T"]),
        base=cfg["base_profile"],
        amp=float(cfg.get("amp", 1.0)),
        tail_sign=cfg.get("tail_sign"),
        perturbation=perturbation,
        bound_amp=cfg.get("bound_amp"),
        r_in=float(grid["r_in"]),
        r_max=float(grid["r_max"]),
        points=int(grid["points"]),
        r_first=float(grid["r_first"]),
        outer=grid["outer"],
    )
    name = cfg.get("name") or f"{cfg['experiment']}_N{cfg['dim']}"
    return RunConfig(raw=copy.deepcopy(cfg), name=name, experiment=cfg["experiment"], data=spec,
                     solver=_merged(cfg, "solver"), checks=_merged(cfg, "checks"),
                     outputs=_merged(cfg, "outputs"))
