"""Experiment configuration: a single versioned JSON document."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import jsonschema

from .core import stable_digest
from .deformations import DeformKind
from .errors import ConfigError
from .teststats import MetricConfig, MetricKind

SCHEMA_VERSION = 1

_METRIC_ITEM = {
    "oneOf": [
        {"enum": [m.value for m in MetricKind]},
        {
            "type": "object",
            "properties": {
                "kind": {"enum": [m.value for m in MetricKind]},
                "K": {"type": "integer", "minimum": 1},
                "fgd_fit_fractions": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 1},
                    "minItems": 2,
                },
                "fgd_draws_per_size": {"type": "integer", "minimum": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "source": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "type": {"enum": ["cg", "mog"]},
                        "d": {"type": "integer", "minimum": 1},
                        "components": {"type": "integer", "minimum": 1},
                        "covariance": {"enum": ["mixture", "correlation"]},
                    },
                    "required": ["type", "d"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "model_file"},
                        "path": {"type": "string"},
                    },
                    "required": ["type", "path"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "dataset"},
                        "path": {"type": "string"},
                        "format": {"enum": ["csv", "raw"]},
                    },
                    "required": ["type", "path"],
                    "additionalProperties": False,
                },
            ]
        },
        "metrics": {"type": "array", "items": _METRIC_ITEM, "minItems": 1},
        "deformations": {
            "type": "array",
            "items": {"enum": [k.value for k in DeformKind]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "sample_sizes": {
            "type": "array",
            "items": {"type": "integer", "minimum": 2},
            "minItems": 1,
            "uniqueItems": True,
        },
        "alphas": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "minItems": 1,
            "uniqueItems": True,
        },
        "null_iterations": {"type": "integer", "minimum": 1},
        "llr_null_iterations": {"type": "integer", "minimum": 1},
        "reps": {"type": "integer", "minimum": 2},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "noisy_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "eps_max": {"type": "number", "exclusiveMinimum": 0},
        "scale_features": {"type": "boolean"},
        "bootstrap_with_replacement": {"type": "boolean"},
        "output_dir": {"type": "string"},
    },
    "required": ["schema_version", "master_seed", "source", "metrics", "deformations", "sample_sizes"],
    "additionalProperties": False,
}


@dataclass
class ExperimentConfig:
    master_seed: int
    source: dict
    metrics: list[tuple[MetricKind, MetricConfig]]
    deformations: list[DeformKind]
    sample_sizes: list[int]
    name: str = "experiment"
    alphas: list[float] = field(default_factory=lambda: [0.05, 0.01])
    null_iterations: int = 10_000
    llr_null_iterations: Optional[int] = None
    reps: int = 100
    tolerance: float = 1e-2
    noisy_tolerance: float = 5e-2
    eps_max: float = 2.0
    scale_features: bool = False
    bootstrap_with_replacement: bool = True
    output_dir: str = "results"
    base_dir: Path = field(default_factory=Path.cwd)
    raw: dict = field(default_factory=dict)

    @property
    def llr_iterations(self) -> int:
        return self.llr_null_iterations or self.null_iterations

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = dict(self.raw, master_seed=int(seed))
        return replace(self, master_seed=int(seed), raw=raw)

    def digest(self) -> str:
        return stable_digest([json.dumps(self.raw, sort_keys=True)])


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def parse_config(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = [f"{_pointer(e.absolute_path)}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(msgs))

    metrics = []
    for item in data["metrics"]:
        if isinstance(item, str):
            metrics.append((MetricKind(item), MetricConfig()))
        else:
            kw = {k: v for k, v in item.items() if k != "kind"}
            if "fgd_fit_fractions" in kw:
                kw["fgd_fit_fractions"] = tuple(kw["fgd_fit_fractions"])
            try:
                metrics.append((MetricKind(item["kind"]), MetricConfig(**kw)))
            except ValueError as exc:
                raise ConfigError(f"/metrics: {exc}") from None
    kinds = [m for m, _ in metrics]
    if len(set(kinds)) != len(kinds):
        raise ConfigError("/metrics: each metric may appear only once")

    opt = {
        k: data[k]
        for k in (
            "name",
            "alphas",
            "null_iterations",
            "llr_null_iterations",
            "reps",
            "tolerance",
            "noisy_tolerance",
            "eps_max",
            "scale_features",
            "bootstrap_with_replacement",
            "output_dir",
        )
        if k in data
    }
    cfg = ExperimentConfig(
        master_seed=int(data["master_seed"]),
        source=dict(data["source"]),
        metrics=metrics,
        deformations=[DeformKind(k) for k in data["deformations"]],
        sample_sizes=[int(n) for n in data["sample_sizes"]],
        base_dir=Path(base_dir) if base_dir else Path.cwd(),
        raw=data,
        **opt,
    )
    if cfg.source["type"] in ("cg", "mog"):
        check_fgd_sizes(cfg, cfg.source["d"])
    return cfg


def check_fgd_sizes(cfg: ExperimentConfig, d: int) -> None:
    """FGD extrapolation needs every subsample to hold at least d+2 points."""
    for kind, mcfg in cfg.metrics:
        if kind is not MetricKind.FGD:
            continue
        fmax = max(mcfg.fgd_fit_fractions)
        for i, n in enumerate(cfg.sample_sizes):
            if n < d + 2 or int(n / fmax) < d + 2:
                raise ConfigError(
                    f"/sample_sizes/{i}: n={n} too small for FGD extrapolation in d={d} "
                    f"(needs floor(n/{fmax}) >= {d + 2})"
                )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data, path.parent)
