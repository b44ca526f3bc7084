"""Flat dotted-key config files with typed options and flag overrides.

One `key = value` pair per line; blank lines and lines starting with `#`
are ignored. Values are JSON literals (numbers, true/false, null, quoted
strings, [lists]); anything that does not parse as JSON is taken as a bare
string, so paths work unquoted. Inline comments are not supported because
a `#` may legitimately appear inside a value.
"""

import json
import re
from pathlib import Path

from .errors import ConfigError

_KEY_RE = re.compile(r"^[a-z][a-z0-9_.]*$")

REQUIRED = object()


def parse_config_text(text, source="<config>"):
    """Key/value pairs from config text; duplicate or malformed lines fail."""
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"{source}:{number}: bad key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        value = value.strip()
        try:
            values[key] = json.loads(value)
        except json.JSONDecodeError:
            values[key] = value
    return values


def load_config_file(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


class Option:
    """One config key: its type, default, and coercion rules.

    kind is one of int, float, bool, str, floats, ints. A default of
    REQUIRED makes the key mandatory; a default of None makes it optional
    with "unset" meaning.
    """

    def __init__(self, key, kind, default, help=""):
        self.key = key
        self.kind = kind
        self.default = default
        self.help = help

    def coerce(self, value):
        try:
            return self._coerce(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.key}: {exc}") from exc

    def _coerce(self, value):
        if value is None:
            return None
        if self.kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"expected an integer, got {value!r}")
            return value
        if self.kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"expected a number, got {value!r}")
            return float(value)
        if self.kind == "bool":
            if not isinstance(value, bool):
                raise ValueError(f"expected true or false, got {value!r}")
            return value
        if self.kind == "str":
            if not isinstance(value, str):
                raise ValueError(f"expected a string, got {value!r}")
            return value
        if self.kind == "floats":
            if not isinstance(value, (list, tuple)) or not value:
                raise ValueError(f"expected a non-empty list, got {value!r}")
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
                raise ValueError(f"expected numbers, got {value!r}")
            return tuple(float(v) for v in value)
        if self.kind == "ints":
            if not isinstance(value, (list, tuple)) or not value:
                raise ValueError(f"expected a non-empty list, got {value!r}")
            if any(isinstance(v, bool) or not isinstance(v, int) for v in value):
                raise ValueError(f"expected integers, got {value!r}")
            return tuple(value)
        raise ValueError(f"unknown option kind {self.kind!r}")


def resolve_options(options, file_values=None, overrides=None):
    """Merge defaults <- file <- overrides into a validated dict.

    Unknown file keys are rejected; overrides (flag values) only apply when
    not None. REQUIRED keys must end up set.
    """
    by_key = {opt.key: opt for opt in options}
    file_values = dict(file_values or {})
    unknown = sorted(set(file_values) - set(by_key))
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))

    resolved = {}
    for opt in options:
        value = opt.default
        if opt.key in file_values:
            value = opt.coerce(file_values[opt.key])
        if overrides and overrides.get(opt.key) is not None:
            value = opt.coerce(overrides[opt.key])
        if value is REQUIRED:
            raise ConfigError(f"{opt.key} is required (set it in the config file or by flag)")
        resolved[opt.key] = value
    return resolved


def format_config(values):
    """Config text that parse_config_text reads back to the same dict."""
    lines = []
    for key in sorted(values):
        value = values[key]
        if value is None:
            encoded = "null"
        elif isinstance(value, tuple):
            encoded = json.dumps(list(value))
        else:
            encoded = json.dumps(value)
        lines.append(f"{key} = {encoded}")
    return "\n".join(lines) + "\n"


def write_resolved(path, values, header=""):
    """Record the settings a run actually used, next to its outputs."""
    text = format_config(values)
    if header:
        text = f"# {header}\n" + text
    Path(path).write_text(text)


__all__ = [
    "Option",
    "REQUIRED",
    "format_config",
    "load_config_file",
    "parse_config_text",
    "resolve_options",
    "write_resolved",
]
