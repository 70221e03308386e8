"""INI-style run configuration with typed access and line diagnostics."""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import re
from dataclasses import dataclass, field

from .errors import ConfigError

DEFAULTS = """
[run]
seed = 42
out_dir = scfred-out

[tolerances]
solver = 1e-11
projection = 1e-9
roundtrip = 1e-10
germ = 1e-14

[grid]
domain = line
L = 6.0
h = 0.1
base_order = 1
weights = 0.0, 0.5, 1.0
target_dim = 1

[glue]
profile = exponential
r = 0.5
mode = grid

[germ]
name = sine
v = 0.5
level = 0

[morse]
problem = double_well
dimension =
terms =
n_angles = 64

[pregluing]
radii = 0.3, 0.2, 0.1
profile = exponential
"""

_FLOAT_KEYS = {
    "tolerances": {"solver", "projection", "roundtrip", "germ"},
    "grid": {"l", "h"},
    "glue": {"r"},
    "germ": {"v"},
}
_INT_KEYS = {"run": {"seed"}, "grid": {"base_order", "target_dim"}, "germ": {"level"}, "morse": {"n_angles"}}
_POSITIVE = {"tolerances": {"solver", "projection", "roundtrip", "germ"}, "grid": {"l", "h"}}


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line, re.IGNORECASE):
            return i
    return None


@dataclass
class RunConfig:
    parser: configparser.ConfigParser
    text: str = ""
    source: str | None = None
    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str, source: str | None = None) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_string(DEFAULTS, source="<defaults>")
        try:
            parser.read_string(text, source=source or "<config>")
        except configparser.DuplicateOptionError as exc:
            raise ConfigError(f"duplicate key {exc.section}.{exc.option}", key=f"{exc.section}.{exc.option}",
                              line=exc.lineno) from None
        except configparser.DuplicateSectionError as exc:
            raise ConfigError(f"duplicate section [{exc.section}]", key=exc.section, line=exc.lineno) from None
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError("key outside any [section]", line=exc.lineno) from None
        except configparser.ParsingError as exc:
            lineno, line = exc.errors[0]
            raise ConfigError(f"cannot parse line {lineno}: {line.strip()!r}", line=lineno) from None
        cfg = cls(parser, text, source)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_text(fh.read(), source=str(path))

    @classmethod
    def default(cls) -> "RunConfig":
        return cls.from_text("")

    def set(self, section: str, key: str, value) -> None:
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        self.parser.set(section, key, str(value))
        self.overrides[f"{section}.{key}"] = str(value)
        self.validate()

    def _fail(self, section, key, msg):
        raise ConfigError(f"{section}.{key}: {msg}", key=f"{section}.{key}", line=_line_of(self.text, section, key))

    def validate(self) -> None:
        for section, keys in _FLOAT_KEYS.items():
            for key in keys:
                self.get_float(section, key)
        for section, keys in _INT_KEYS.items():
            for key in keys:
                self.get_int(section, key)
        for section, keys in _POSITIVE.items():
            for key in keys:
                if not self.get_float(section, key) > 0:
                    self._fail(section, key, "must be > 0")
        if self.get("grid", "domain") not in ("line", "cylinder"):
            self._fail("grid", "domain", "must be 'line' or 'cylinder'")
        if self.get("glue", "profile") not in ("exponential", "logarithmic"):
            self._fail("glue", "profile", "must be 'exponential' or 'logarithmic'")
        self.get_floats("grid", "weights")
        self.get_floats("pregluing", "radii")

    def get(self, section: str, key: str, fallback=None) -> str:
        return self.parser.get(section, key, fallback=fallback)

    def get_float(self, section: str, key: str) -> float:
        raw = self.get(section, key)
        try:
            return float(raw)
        except (TypeError, ValueError):
            self._fail(section, key, f"expected a number, got {raw!r}")

    def get_int(self, section: str, key: str) -> int:
        raw = self.get(section, key)
        try:
            return int(raw)
        except (TypeError, ValueError):
            self._fail(section, key, f"expected an integer, got {raw!r}")

    def get_floats(self, section: str, key: str) -> tuple:
        raw = self.get(section, key, "")
        try:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        except ValueError:
            self._fail(section, key, f"expected a comma-separated list of numbers, got {raw!r}")

    @property
    def seed(self) -> int:
        return self.get_int("run", "seed")

    def as_dict(self) -> dict:
        return {s: dict(self.parser.items(s)) for s in sorted(self.parser.sections())}

    def hash(self) -> str:
        """SHA-256 of the effective configuration (sorted, canonical JSON)."""
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def out_dir(self) -> str:
        """Output directory; the ``SCFRED_OUT`` environment variable wins."""
        return os.environ.get("SCFRED_OUT") or self.get("run", "out_dir")
