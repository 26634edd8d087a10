"""Run configuration: profile defaults from config.yml, a user file, then flags.

A user file holds flat ``key: value`` (or ``key=value``) lines, or the
same profile sections as config.yml. Later sources win.
"""

import logging
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from whittaker_lab.errors import ConfigError
from whittaker_lab.operator_lab import GridSpec
from whittaker_lab.specfun import AccuracyPolicy

logger = logging.getLogger(__name__)

load_dotenv()

PROFILE_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config.yml")
PROFILES = ("development", "production")
FORMATS = ("csv", "json")

DEFAULTS: Dict[str, Any] = {
    "target_rel_error": 1e-10,
    "max_terms": 600,
    "large_x_switch": 30.0,
    "log_epsilon": 1e-4,
    "diagonal_switch": 1e-3,
    "x_min": 1e-3,
    "x_max": 40.0,
    "nodes": 200,
    "levels": 3,
    "buffer_decades": 6,
    "seed": 0,
    "format": "csv",
    "output": None,
    "log_level": "INFO",
    "log_file": None,
    "plancherel_points_per_unit": 32,
    "plancherel_m_cap": 60.0,
}

_KEY_VALUE = re.compile(r"^(\s*)([A-Za-z_][\w.-]*)\s*=\s*(.*)$")


class Settings:
    """Process environment"""
    PROFILE = os.environ.get("WHITTAKER_PROFILE", "development")
    OUTPUT_DIR = os.environ.get("WHITTAKER_OUTPUT_DIR")


@dataclass
class RunConfig:
    subcommand: Optional[str] = None
    values: Dict[str, Any] = field(default_factory=lambda: dict(DEFAULTS))
    profile: str = "development"

    def __getitem__(self, key: str):
        return self.values[key]

    def policy(self) -> AccuracyPolicy:
        return AccuracyPolicy(
            target_rel_error=self["target_rel_error"],
            max_terms=self["max_terms"],
            large_x_switch=self["large_x_switch"],
            log_epsilon=self["log_epsilon"],
        )

    def grid_spec(self) -> GridSpec:
        return GridSpec(x_min=self["x_min"], x_max=self["x_max"], nodes=self["nodes"],
                        buffer_decades=self["buffer_decades"])

    def output_path(self) -> Optional[str]:
        path = self["output"]
        if path and not os.path.isabs(path) and Settings.OUTPUT_DIR:
            return os.path.join(Settings.OUTPUT_DIR, path)
        return path

    def header(self) -> dict:
        return {"subcommand": self.subcommand, "profile": self.profile, **self.values}

    def override(self, flags: Dict[str, Any]) -> "RunConfig":
        """Flags left at None do not override."""
        for key, value in flags.items():
            if value is not None:
                self.values[key] = _coerce(key, value, None)
        return self


def _coerce(key: str, value, line: Optional[int]):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown key {key!r}", line)
    default = DEFAULTS[key]
    if value is None or default is None:
        return None if value is None else str(value)
    try:
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"{value} is not an integer")
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value for {key!r}: {e}", line) from None
    value = str(value)
    if key == "format" and value not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {value!r}", line)
    return value


def _to_yaml(text: str) -> str:
    """Rewrite ``key=value`` lines as ``key: value``; other lines are left to YAML."""
    lines = []
    for raw in text.splitlines():
        match = _KEY_VALUE.match(raw)
        lines.append(f"{match.group(1)}{match.group(2)}: {match.group(3)}" if match else raw)
    return "\n".join(lines)


def _line_of(text: str, key: str) -> Optional[int]:
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*[:=]")
    for number, raw in enumerate(text.splitlines(), start=1):
        if pattern.match(raw):
            return number
    return None


_TOP_LEVEL = re.compile(r"^[A-Za-z_][\w.-]*\s*[:=]")


def _check_lines(text: str):
    """Every unindented line must open a key."""
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#") or raw[0].isspace() or stripped == "---":
            continue
        if not _TOP_LEVEL.match(raw):
            raise ConfigError(f"malformed line {raw!r}", number)


def _parse(text: str) -> Dict[str, Any]:
    _check_lines(text)
    try:
        data = yaml.safe_load(_to_yaml(text))
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None) or getattr(e, "context_mark", None)
        raise ConfigError(f"cannot parse config: {getattr(e, 'problem', e)}",
                          mark.line + 1 if mark is not None else None) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of key: value pairs", 1)
    return data


def _section(data: Dict[str, Any], profile: str) -> Dict[str, Any]:
    if any(name in data for name in PROFILES):
        section = data.get(profile) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"profile {profile!r} is not a mapping", None)
        return section
    return data


def profile_defaults(profile: str = None, path: str = PROFILE_FILE) -> Dict[str, Any]:
    profile = profile or Settings.PROFILE
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    values = dict(DEFAULTS)
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as file:
            text = file.read()
        for key, value in _section(_parse(text), profile).items():
            values[key] = _coerce(key, value, _line_of(text, key))
    else:
        logger.debug("no profile file at %s, using built-in defaults", path)
    return values


def load_config(path: Optional[str] = None, profile: str = None, subcommand: str = None) -> RunConfig:
    """Profile defaults merged with the file at ``path`` when one is given."""
    profile = profile or Settings.PROFILE
    config = RunConfig(subcommand=subcommand, values=profile_defaults(profile), profile=profile)
    if path is None:
        return config
    try:
        with open(path, "r", encoding="utf-8") as file:
            text = file.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"config file {path} is not UTF-8") from None
    for key, value in _section(_parse(text), profile).items():
        config.values[key] = _coerce(str(key), value, _line_of(text, str(key)))
    logger.debug("loaded config %s (profile %s)", path, profile)
    return config
