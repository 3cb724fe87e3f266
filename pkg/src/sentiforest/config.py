"""Run configuration: YAML file with a published JSON schema.

One config file drives every command; CLI flags override the file, the file
overrides documented defaults. Unknown keys are rejected and module-level
preconditions (smoothing alpha, horizon, prune threshold, forest params)
are checked at load time. The resolved config hashes into provenance
records so artifacts state exactly what produced them.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Optional

import jsonschema
import yaml

from .errors import ConfigError
from .forest import HyperParams
from .preprocess import LabelSpec, SmoothingParams

_NUM = {"type": "number"}
_INT1 = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "sentiforest run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "workers": _INT1,
        "smoothing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
        },
        "label": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"horizon": _INT1},
        },
        "indicators": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "additionalProperties": _NUM,
            },
        },
        "sentiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "provider": {"enum": ["none", "lexicon", "fixture", "http"]},
                "decay": {"type": "number", "minimum": 0, "maximum": 1},
                "endpoint": {"type": "string"},
                "fixture_path": {"type": "string"},
                "parallelism": _INT1,
                "timeout": {"type": "number", "exclusiveMinimum": 0},
                "retries": {"type": "integer", "minimum": 0},
            },
        },
        "prune": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
            },
        },
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "train_fraction": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "exclusiveMaximum": 1,
                }
            },
        },
        "pca": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "variance_target": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "maximum": 1,
                },
            },
        },
        "ridge": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lambda": {"type": "number", "minimum": 0}},
        },
        "cv": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"folds": {"type": "integer", "minimum": 2}},
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trials": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
            },
        },
        "compare": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"trials": {"type": "integer", "minimum": 0}},
        },
        "fetch": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cache_dir": {"type": "string"},
                "min_interval": {"type": "number", "minimum": 0},
                "retries": {"type": "integer", "minimum": 0},
                "timeout": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "forest": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_trees": _INT1,
                "max_depth": {"type": ["integer", "null"], "minimum": 1},
                "min_samples_split": {"type": "integer", "minimum": 2},
                "min_samples_leaf": _INT1,
                "max_features": {
                    "oneOf": [
                        {"enum": ["sqrt", "log2"]},
                        {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    ]
                },
            },
        },
    },
}

DEFAULTS: dict = {
    "seed": 42,
    "workers": 1,
    "smoothing": {"alpha": 0.2},
    "label": {"horizon": 60},
    "indicators": {},
    "sentiment": {
        "provider": "lexicon",
        "decay": 0.9,
        "endpoint": "",
        "fixture_path": "",
        "parallelism": 1,
        "timeout": 10.0,
        "retries": 2,
    },
    "prune": {"threshold": 0.8},
    "split": {"train_fraction": 0.6667},
    "pca": {"enabled": False, "variance_target": 0.95},
    "ridge": {"lambda": 1.0},
    "cv": {"folds": 3},
    "search": {"trials": 50},
    "compare": {"trials": 3},
    "fetch": {"cache_dir": "cache", "min_interval": 13.0, "retries": 3, "timeout": 30.0},
    "forest": {
        "n_trees": 300,
        "max_depth": None,
        "min_samples_split": 2,
        "min_samples_leaf": 1,
        "max_features": "sqrt",
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class RunConfig:
    """Validated, fully-resolved configuration for one run."""

    def __init__(self, data: Optional[dict] = None):
        raw = data or {}
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = ".".join(str(p) for p in exc.absolute_path) or "(top level)"
            raise ConfigError(f"config key {path}: {exc.message}") from None
        self.data = _deep_merge(DEFAULTS, raw)
        self._check_preconditions()

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path} must contain a mapping at the top level")
        return cls(loaded)

    def _check_preconditions(self):
        # constructing the module types runs their range checks now
        SmoothingParams(alpha=self.data["smoothing"]["alpha"])
        LabelSpec(horizon=self.data["label"]["horizon"])
        self.hyperparams(seed=0)
        provider = self.data["sentiment"]["provider"]
        if provider == "http" and not self.data["sentiment"]["endpoint"]:
            raise ConfigError("sentiment.provider=http requires sentiment.endpoint")
        if provider == "fixture" and not self.data["sentiment"]["fixture_path"]:
            raise ConfigError("sentiment.provider=fixture requires sentiment.fixture_path")

    def __getitem__(self, key: str) -> Any:
        return self.data[key]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def hyperparams(self, seed: Optional[int] = None) -> HyperParams:
        f = self.data["forest"]
        return HyperParams(
            n_trees=f["n_trees"],
            max_depth=f["max_depth"],
            min_samples_split=f["min_samples_split"],
            min_samples_leaf=f["min_samples_leaf"],
            max_features=f["max_features"],
            seed=self.seed if seed is None else seed,
        )

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def schema_json() -> str:
    return json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True)
