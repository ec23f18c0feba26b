"""Reader/writer for the ``key = value`` text files used by camera and training configs."""

import dataclasses
from typing import Any, Dict, Iterable, Tuple, Type, TypeVar

from transformers.utils import logging

from .errors import ConfigError

logger = logging.get_logger(__name__)

T = TypeVar("T")


def parse_kv(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines. Blank lines and ``#`` comments are skipped."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def format_kv(items: Iterable[Tuple[str, Any]], header: str = "") -> str:
    lines = [f"# {header}"] if header else []
    for key, value in items:
        if isinstance(value, (list, tuple)):
            value = " ".join(_format_scalar(v) for v in value)
        else:
            value = _format_scalar(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _format_scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def coerce(value: str, like: Any, key: str = "") -> Any:
    """Convert ``value`` to the type of ``like``."""
    try:
        if isinstance(like, bool):
            lowered = value.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float):
            return float(value)
        if isinstance(like, tuple):
            parts = value.replace(",", " ").split()
            if len(parts) != len(like):
                raise ValueError(value)
            return tuple(coerce(p, l) for p, l in zip(parts, like))
    except ValueError:
        raise ConfigError(f"invalid value for {key or 'field'}: {value!r}") from None
    return value


def load_dataclass(cls: Type[T], text: str, **overrides: Any) -> T:
    """Build dataclass ``cls`` from key/value text; unknown keys are rejected."""
    defaults = cls()
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs: Dict[str, Any] = {}
    for key, value in parse_kv(text).items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = coerce(value, getattr(defaults, key), key)
    kwargs.update(overrides)
    return dataclasses.replace(defaults, **kwargs)


def dump_dataclass(obj: Any, header: str = "") -> str:
    return format_kv(((f.name, getattr(obj, f.name)) for f in dataclasses.fields(obj)), header)
