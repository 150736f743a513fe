"""Flat ``section.key = value`` configuration files.

No nesting, no quoting: one assignment per line, ``#`` comments, unknown keys
rejected at command level.  Validation collects every violated field before
raising, and each command echoes its resolved configuration verbatim into the
run directory.
"""

import pathlib

from .errors import ConfigurationError


def parse_config_text(text, source="<config>"):
    values = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            errors.append(f"{source}:{lineno}: empty key")
            continue
        if key in values:
            errors.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        values[key] = value
    if errors:
        raise ConfigurationError(errors)
    return values


def load_config(path):
    path = pathlib.Path(path)
    if not path.exists():
        raise ConfigurationError([f"config file {path} does not exist"])
    return parse_config_text(path.read_text(), source=str(path))


def resolved_text(values):
    """Deterministic dump of a resolved configuration."""
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values))


class ConfigView:
    """Typed accessors over a flat key-value dict; errors are collected so a
    single pass reports every violated field."""

    def __init__(self, values):
        self.values = dict(values)
        self.errors = []
        self.used = set()

    def _fetch(self, key, default):
        self.used.add(key)
        if key in self.values:
            return self.values[key]
        return default

    def get_str(self, key, default=None, required=False):
        value = self._fetch(key, default)
        if value is None and required:
            self.errors.append(f"{key}: required")
        return value

    def get_int(self, key, default=None, lo=None, hi=None):
        raw = self._fetch(key, default)
        if raw is None:
            return None
        try:
            value = int(str(raw))
        except ValueError:
            self.errors.append(f"{key}: {raw!r} is not an integer")
            return default
        if lo is not None and value < lo:
            self.errors.append(f"{key}: {value} below minimum {lo}")
        if hi is not None and value > hi:
            self.errors.append(f"{key}: {value} above maximum {hi}")
        return value

    def get_float(self, key, default=None, lo=None, hi=None):
        raw = self._fetch(key, default)
        if raw is None:
            return None
        try:
            value = float(str(raw))
        except ValueError:
            self.errors.append(f"{key}: {raw!r} is not a number")
            return default
        if lo is not None and value < lo:
            self.errors.append(f"{key}: {value} below minimum {lo}")
        if hi is not None and value > hi:
            self.errors.append(f"{key}: {value} above maximum {hi}")
        return value

    def get_bool(self, key, default=None):
        raw = self._fetch(key, default)
        if raw is None:
            return None
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        self.errors.append(f"{key}: {raw!r} is not a boolean")
        return default

    def get_path(self, key, default=None, required=False, must_exist=False):
        raw = self.get_str(key, default, required=required)
        if raw is None:
            return None
        path = pathlib.Path(raw)
        if must_exist and not path.exists():
            self.errors.append(f"{key}: path {path} does not exist")
        return path

    def finalize(self):
        if self.errors:
            raise ConfigurationError(self.errors)
        return self

    def resolved(self):
        return dict(self.values)
