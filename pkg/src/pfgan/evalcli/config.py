"""Flat ``key = value`` config files and typed dataclass construction."""
import dataclasses
import typing

from ..errors import ConfigError, StorageError


def parse_config_text(text, source="<config>"):
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        values[key] = value
    return values


def read_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise StorageError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, path)


def _convert(name, kind, value):
    if not isinstance(value, str):
        return value
    origin = typing.get_origin(kind)
    if origin is typing.Union:
        if value.lower() in ("none", ""):
            return None
        kind = next(a for a in typing.get_args(kind) if a is not type(None))
    try:
        if kind is bool:
            low = value.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(value)
            return low in ("1", "true", "yes")
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind is tuple:
            return tuple(int(v) for v in value.replace(",", " ").split())
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value {value!r} for {name}") from exc


def field_types(cls):
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def build(cls, values):
    """Instantiate ``cls`` from the entries of ``values`` naming its fields."""
    types = field_types(cls)
    kwargs = {k: _convert(k, types[k], v) for k, v in values.items() if k in types}
    return cls(**kwargs)


def check_known(values, *classes, extra=()):
    known = set(extra)
    for cls in classes:
        known |= set(field_types(cls))
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
