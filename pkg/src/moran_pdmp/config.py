"""Run configuration shared by every CLI subcommand, validated against one JSON schema."""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .env import EnvironmentModel
from .errors import ConfigError, ModelError

_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "fitness": {"type": "array", "minItems": 1,
                    "items": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": -1}}},
        "Q": {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}},
    },
    "required": ["fitness", "Q"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "model": {"oneOf": [MODEL_SCHEMA, {"type": "string"}]},
        "seed": {"type": "integer", "minimum": 0},
        "x0": {"oneOf": [{"type": "number", "minimum": 0, "maximum": 1},
                         {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0, "maximum": 1}}]},
        "env0": {"type": "integer", "minimum": 0},
        "T": _POS,
        "dt_sample": _POS,
        "h_max": _POS,
        "J": _POS_INT,
        "alpha": {"type": "array", "items": _POS},
        "record_every": _POS_INT,
        "stop_at_absorption": {"type": "boolean"},
        "n_traj": {"type": "integer", "minimum": 2},
        "bins": _POS_INT,
        "edge": {"type": "integer", "minimum": 1, "maximum": 3},
        "burn_in": {"type": "number", "minimum": 0},
        "J_list": {"type": "array", "minItems": 2, "items": {"type": "integer", "minimum": 50}},
        "t": {"type": "number", "minimum": 0},
        "observable": {"type": "string", "pattern": "^x[0-9]+(\\^[0-9])?(\\*x[0-9]+(\\^[0-9])?)*$"},
        "engine": {"enum": ["moran", "pdmp"]},
        "threads": _POS_INT,
        "quick": {"type": "boolean"},
    },
    "additionalProperties": False,
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_config(cfg: dict) -> dict:
    """Raise ConfigError pointing at the first offending location."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        # oneOf failures hide the useful message in their context
        if err.context:
            err = max(err.context, key=lambda e: len(e.absolute_path))
        raise ConfigError(err.message, _pointer(err.absolute_path))
    if isinstance(cfg.get("model"), dict):
        try:
            EnvironmentModel.from_dict(cfg["model"])
        except ModelError as e:
            raise ConfigError(str(e), "/model") from None
    return cfg


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON ({e.msg} at line {e.lineno})", "/") from None
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object", "/")
    return validate_config(cfg)


def resolve_model(value) -> EnvironmentModel:
    """A model block, a path to a model JSON file, inline JSON text or a preset name."""
    from .models import PRESETS, preset
    if isinstance(value, dict):
        return EnvironmentModel.from_dict(value)
    if isinstance(value, str):
        if value in PRESETS:
            return preset(value)
        text = value
        p = Path(value)
        if not value.lstrip().startswith("{"):
            if not p.exists():
                raise ConfigError(f"{value!r} is neither a model file nor a preset ({sorted(PRESETS)})", "/model")
            text = p.read_text()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid model JSON ({e.msg})", "/model") from None
        try:
            jsonschema.validate(d, MODEL_SCHEMA)
        except jsonschema.ValidationError as e:
            raise ConfigError(e.message, "/model" + _pointer(e.absolute_path).rstrip("/")) from None
        try:
            return EnvironmentModel.from_dict(d)
        except ModelError as e:
            raise ConfigError(str(e), "/model") from None
    raise ConfigError("model must be an object or a string", "/model")
