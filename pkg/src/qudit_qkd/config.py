"""JSON session configuration: schema, loading and overrides."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .bases import BasisId
from .errors import ConfigError, UnknownBasis
from .protocol import ChannelConfig, EveConfig, SessionConfig, SourceConfig

_PROB = {"type": "number", "minimum": 0, "maximum": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "SessionConfig",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_pulses": {"type": "integer", "minimum": 1},
        "basis_set": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 3},
        "sample_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "compression_ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "transmittance": _PROB,
                "depolarizing_prob": _PROB,
                "rotation_misalignment": {"type": "number"},
                "dark_count_prob": _PROB,
            },
        },
        "source": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["single_photon", "wcp"]},
                "mu": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "eve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"kind": {"enum": ["none", "intercept_resend"]}},
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


def _describe(err: jsonschema.ValidationError) -> str:
    where = ".".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{where}: {err.message}"


def validate(raw: dict) -> None:
    errors = sorted(_VALIDATOR.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(_describe(e) for e in errors))


def from_dict(raw: dict) -> SessionConfig:
    validate(raw)
    raw = copy.deepcopy(raw)
    try:
        basis_set = tuple(BasisId.parse(b) for b in raw.pop("basis_set", ["psi2", "psi4"]))
    except UnknownBasis as exc:
        raise ConfigError(f"basis_set: {exc}") from None
    return SessionConfig(
        basis_set=basis_set,
        channel=ChannelConfig(**raw.pop("channel", {})),
        source=SourceConfig(**raw.pop("source", {})),
        eve=EveConfig(**raw.pop("eve", {})),
        **raw,
    )


def load(path: str | Path) -> SessionConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(raw)


def with_overrides(cfg: SessionConfig, **changes) -> SessionConfig:
    """Rebuild ``cfg`` through its dict form so every check runs again."""
    d = cfg.to_dict()
    for key, value in changes.items():
        if value is None:
            continue
        if "." in key:
            outer, inner = key.split(".", 1)
            d[outer][inner] = value
        else:
            d[key] = value
    return from_dict(d)
