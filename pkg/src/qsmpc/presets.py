"""Experiment configuration: versioned JSON schema and named presets."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

SCHEMA_VERSION = 1

EXPERIMENTS = ("three-level", "compare", "scaling", "ising", "reduction-check")

_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "j": {"type": "number", "exclusiveMinimum": 0},
        "eta": {"type": "number", "minimum": 0, "maximum": 1},
        "kappa": {"type": "number", "minimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "delta_t": {"type": "number", "exclusiveMinimum": 0},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "u_min": {"type": "number"},
        "u_max": {"type": "number"},
        "rho0_diag": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "target_index": {"type": "integer", "minimum": 0},
        "n_qubits": {"type": "integer", "minimum": 1},
        "couplings": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [
                    {"type": "integer"},
                    {"type": "integer"},
                    {"type": "number"},
                ],
                "minItems": 3,
                "maxItems": 3,
            },
        },
        "fields": {
            "anyOf": [
                {"type": "number"},
                {"type": "array", "items": {"type": "number"}},
            ]
        },
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "experiment", "model"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "n_paths": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "model": _MODEL_SCHEMA,
        "j_values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "n_paths_per_j": {"type": "object"},
        "scenario_counts": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
        "standard_blocks": {"type": "integer", "minimum": 1},
        "standard_substeps": {"type": "integer", "minimum": 1},
        "optimizer": {
            "type": "object",
            "properties": {
                "max_iters": {"type": "integer", "minimum": 1},
                "step_size": {"type": "number", "exclusiveMinimum": 0},
                "grad_tol": {"type": "number", "exclusiveMinimum": 0},
                "init_policy": {"enum": ["zeros", "kick"]},
                "ftol_rel": {"type": "number", "exclusiveMinimum": 0},
                "coarse_factor": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "pulse_value": {"type": "number"},
        "pulse_duration": {"type": "number", "exclusiveMinimum": 0},
        "collapse_T": {"type": "number", "exclusiveMinimum": 0},
        "timing_probe_horizons": {"type": "integer", "minimum": 2},
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Configuration failed schema validation."""


def validate_config(config):
    """Schema-validate a config dict; raises ConfigError naming the field."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at '{loc}': {exc.message}") from exc
    return config


_THREE_LEVEL_MODEL = {
    "j": 1,
    "eta": 1.0,
    "kappa": 1.0,
    "dt": 0.01,
    "delta_t": 0.5,
    "T": 20.0,
    "u_min": -5.0,
    "u_max": 5.0,
    "rho0_diag": [0.3, 0.4, 0.3],
    "target_index": 2,
}

PRESETS = {
    "three-level": {
        "schema_version": SCHEMA_VERSION,
        "experiment": "three-level",
        "n_paths": 1000,
        "seed": 2026,
        "model": dict(_THREE_LEVEL_MODEL),
    },
    "three-level-ci": {
        "schema_version": SCHEMA_VERSION,
        "experiment": "three-level",
        "n_paths": 200,
        "seed": 2026,
        "model": {**_THREE_LEVEL_MODEL, "T": 10.0},
    },
    "scaling": {
        "schema_version": SCHEMA_VERSION,
        "experiment": "scaling",
        "n_paths": 1000,
        "seed": 11,
        "j_values": [1, 2, 3, 4, 5],
        "model": {
            "eta": 1.0,
            "kappa": 1.0,
            "dt": 0.01,
            "delta_t": 0.5,
            "T": 150.0,
            "u_min": -5.0,
            "u_max": 5.0,
        },
    },
    "ising-8": {
        "schema_version": SCHEMA_VERSION,
        "experiment": "ising",
        "n_paths": 1000,
        "seed": 17,
        "optimizer": {"max_iters": 15, "ftol_rel": 1e-3, "coarse_factor": 4},
        "model": {
            "n_qubits": 8,
            "fields": 0.5,
            "eta": 1.0,
            "kappa": 1.0,
            "dt": 0.0025,
            "delta_t": 0.05,
            "T": 5.0,
            "u_min": -5.0,
            "u_max": 5.0,
        },
    },
    "ising-4": {
        "schema_version": SCHEMA_VERSION,
        "experiment": "ising",
        "n_paths": 128,
        "seed": 17,
        "optimizer": {"max_iters": 15, "ftol_rel": 1e-3, "coarse_factor": 4},
        "model": {
            "n_qubits": 4,
            "fields": 0.5,
            "eta": 1.0,
            "kappa": 1.0,
            "dt": 0.0025,
            "delta_t": 0.05,
            "T": 2.0,
            "u_min": -5.0,
            "u_max": 5.0,
        },
    },
    "compare": {
        "schema_version": SCHEMA_VERSION,
        "experiment": "compare",
        "n_paths": 64,
        "seed": 5,
        "scenario_counts": [8, 32, 128],
        "standard_blocks": 10,
        "standard_substeps": 5,
        "timing_probe_horizons": 10,
        "model": dict(_THREE_LEVEL_MODEL),
    },
    "reduction-check": {
        "schema_version": SCHEMA_VERSION,
        "experiment": "reduction-check",
        "n_paths": 1000,
        "seed": 23,
        "pulse_value": 2.0,
        "pulse_duration": 0.5,
        "collapse_T": 20.0,
        "model": dict(_THREE_LEVEL_MODEL),
    },
}

for _j in (1, 2, 3, 4, 5):
    PRESETS[f"scaling-j{_j}"] = {
        "schema_version": SCHEMA_VERSION,
        "experiment": "scaling",
        "n_paths": 1000 if _j != 3 else 300,
        "seed": 11,
        "j_values": [_j],
        "model": dict(PRESETS["scaling"]["model"]),
    }


def get_preset(name):
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    return copy.deepcopy(PRESETS[name])


def load_config(path=None, preset=None, overrides=None):
    """Resolve a config from a preset and/or JSON file plus CLI overrides."""
    if path is None and preset is None:
        raise ConfigError("either a config file or a preset name is required")
    config = get_preset(preset) if preset else {}
    if path is not None:
        file_cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        if preset:
            model = {**config.get("model", {}), **file_cfg.get("model", {})}
            config = {**config, **file_cfg}
            config["model"] = model
        else:
            config = file_cfg
    for key, value in (overrides or {}).items():
        if value is not None:
            config[key] = value
    return validate_config(config)
