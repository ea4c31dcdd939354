"""Strict dict <-> dataclass conversion shared by the config types."""
from __future__ import annotations

import dataclasses
from typing import Any, TypeVar

T = TypeVar("T")


class ConfigError(ValueError):
    pass


def from_mapping(cls: type[T], data: dict[str, Any] | None) -> T:
    """Build ``cls`` from ``data``, rejecting unknown keys; lists become tuples."""
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {unknown}")
    for k, v in data.items():
        if isinstance(v, list):
            data[k] = tuple(tuple(x) if isinstance(x, list) else x for x in v)
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def to_mapping(obj) -> dict[str, Any]:
    def conv(v):
        if isinstance(v, tuple):
            return [conv(x) for x in v]
        return v

    return {f.name: conv(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
