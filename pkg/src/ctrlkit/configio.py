"""Config loading helpers: JSON files mapped onto nested dataclasses.

Unknown keys are rejected rather than ignored so that typos in config
files fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import dataclasses
import json
import typing


class ConfigError(ValueError):
    """Raised for malformed or out-of-schema configuration input."""


def dataclass_from_dict(cls, data, path: str = "config"):
    """Build dataclass ``cls`` from a plain dict, recursing into nested
    dataclass fields and converting lists to tuples where declared.

    Raises ConfigError on unknown keys or structural mismatch.
    """
    if not dataclasses.is_dataclass(cls):
        raise TypeError(f"{cls!r} is not a dataclass")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    field_names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - field_names)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        ftype = hints.get(name)
        kwargs[name] = _convert(ftype, value, f"{path}.{name}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _convert(ftype, value, path):
    if ftype is not None and dataclasses.is_dataclass(ftype):
        return dataclass_from_dict(ftype, value, path)
    origin = typing.get_origin(ftype)
    if origin is tuple and isinstance(value, (list, tuple)):
        args = typing.get_args(ftype)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if args and len(args) == len(value):
            return tuple(
                _convert(t, v, f"{path}[{i}]") for i, (t, v) in enumerate(zip(args, value))
            )
        return tuple(value)
    return value


def merge_overrides(base: dict, overrides: dict, path: str = "config") -> dict:
    """Deep-merge ``overrides`` into ``base`` (both plain dicts), returning
    a new dict. Scalar overrides replace; nested dicts merge recursively.
    """
    out = dict(base)
    for key, value in overrides.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = merge_overrides(out[key], value, f"{path}.{key}")
        else:
            out[key] = value
    return out


def load_json_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def dump_json_file(path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
