"""Run configuration: one JSON document, schema-checked, dotted-key overrides.

The document has one section per command plus a shared ``model`` section.
Every key has a typed default; unknown keys are rejected with their full
dotted path so typos fail loudly before any work starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigError

_SCALARS = {"int", "float", "str", "bool"}


@dataclass(frozen=True)
class Field:
    """One config leaf: a default plus a type tag.

    Tags: int, float, str, bool, list[int], list[float], list[str].
    ``nullable`` admits JSON null (used for optional paths and caps).
    """

    default: object
    kind: str
    nullable: bool = False

    def coerce(self, value, path: str):
        if value is None:
            if self.nullable:
                return None
            raise ConfigError(f"{path}: null is not allowed")
        if self.kind in _SCALARS:
            return self._scalar(value, self.kind, path)
        inner = self.kind[len("list["):-1]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        return [self._scalar(v, inner, f"{path}[{i}]") for i, v in enumerate(value)]

    @staticmethod
    def _scalar(value, kind: str, path: str):
        if kind == "bool":
            if isinstance(value, bool):
                return value
        elif kind == "int":
            if isinstance(value, int) and not isinstance(value, bool):
                return value
        elif kind == "float":
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return float(value)
        elif kind == "str":
            if isinstance(value, str):
                return value
        raise ConfigError(f"{path}: expected {kind}, got {value!r}")


SCHEMA: dict = {
    "model": {
        "channels": Field(64, "int"),
        "resolution": Field(0.5, "float"),
    },
    "generate": {
        "out": Field(None, "str", nullable=True),
        "seed": Field(0, "int"),
        "num_scenes": Field(100, "int"),
        "template_mix": Field([0.2, 0.3, 0.3, 0.2], "list[float]"),
        "speed_range": Field([4.0, 12.0], "list[float]"),
        "lateral_noise_sigma": Field(0.3, "float"),
        "lane_change_probability": Field(0.15, "float"),
        "history_steps": Field(20, "int"),
        "future_steps": Field(30, "int"),
        "dt": Field(0.1, "float"),
        "train_fraction": Field(0.8, "float"),
        "split_seed": Field(0, "int"),
    },
    "train": {
        "data": Field(None, "str", nullable=True),
        "out": Field(None, "str", nullable=True),
        "epochs": Field(16, "int"),
        "batch_scenes": Field(32, "int"),
        "lr": Field(1e-3, "float"),
        "lr_drop_epochs": Field([3, 6, 9, 13], "list[int]"),
        "input_range": Field(128.0, "float"),
        "output_range": Field(96.0, "float"),
        "top_k": Field(20, "int", nullable=True),
        "sigma": Field(1.0, "float"),
        "ranking_weight": Field(1e-2, "float"),
        "radius": Field(1.8, "float"),
        "num_endpoints": Field(6, "int"),
        "val_probe": Field(100, "int"),
        "seed": Field(0, "int"),
    },
    "predict": {
        "checkpoint": Field(None, "str", nullable=True),
        "data": Field(None, "str", nullable=True),
        "split": Field("val", "str"),
        "out": Field(None, "str", nullable=True),
        "input_range": Field(128.0, "float"),
        "output_range": Field(192.0, "float"),
        "top_k": Field(20, "int", nullable=True),
        "num_endpoints": Field(6, "int"),
        "radius": Field(1.8, "float"),
    },
    "eval": {
        "predictions": Field(None, "str", nullable=True),
        "data": Field(None, "str", nullable=True),
        "split": Field("val", "str"),
        "out": Field(None, "str", nullable=True),
        "ks": Field([1, 6], "list[int]"),
        "threshold": Field(2.0, "float"),
    },
    "ensemble": {
        "runs": Field([], "list[str]"),
        "weights": Field(None, "list[float]", nullable=True),
        "checkpoint": Field(None, "str", nullable=True),
        "data": Field(None, "str", nullable=True),
        "split": Field("val", "str"),
        "out": Field(None, "str", nullable=True),
        "num_endpoints": Field(6, "int"),
        "radius": Field(1.8, "float"),
        "ks": Field([1, 6], "list[int]"),
        "threshold": Field(2.0, "float"),
    },
    "bench": {
        "out": Field(None, "str", nullable=True),
        "ranges": Field([96.0, 192.0, 384.0], "list[float]"),
        "pixels_per_meter": Field([1.0, 2.0, 4.0], "list[float]"),
        "num_scenes": Field(3, "int"),
        "channels": Field(64, "int"),
        "input_range": Field(128.0, "float"),
        "top_k": Field(20, "int", nullable=True),
        "seed": Field(0, "int"),
    },
}


def default_config() -> dict:
    return {
        section: {name: field.default for name, field in fields.items()}
        for section, fields in SCHEMA.items()
    }


def validate_config(doc: dict) -> dict:
    """Defaults overlaid with ``doc``; every key checked, unknown keys fatal."""
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be an object, got {type(doc).__name__}")
    out = default_config()
    for section, body in doc.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: expected an object, got {type(body).__name__}")
        for name, value in body.items():
            field = SCHEMA[section].get(name)
            if field is None:
                raise ConfigError(f"unknown config key {section}.{name}")
            out[section][name] = field.coerce(value, f"{section}.{name}")
    return out


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return doc


def parse_override(assignment: str) -> tuple[str, str, object]:
    """``section.key=value`` with the value JSON-parsed (bare words pass as strings)."""
    key, sep, raw = assignment.partition("=")
    if not sep:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    parts = key.split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"override key {key!r} must be section.name")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parts[0], parts[1], value


def resolve_config(path=None, overrides=()) -> dict:
    """File (optional) plus dotted overrides, validated against the schema."""
    doc = load_config_file(path) if path is not None else {}
    for assignment in overrides:
        section, name, value = parse_override(assignment)
        doc.setdefault(section, {})
        if not isinstance(doc[section], dict):
            raise ConfigError(f"unknown config key {section}.{name!r}")
        doc[section][name] = value
    return validate_config(doc)
