"""
Plain-text key/value files: process settings from .env and rate presets.

The helpers in this module always prefer existing os.environ values (so shell or
batch-scheduler settings win) while providing one shared parser for the
repository-level .env file and for the parameter preset files written by
`tools/qca_cli.py rates --save`.
"""

from __future__ import annotations

import os
from functools import lru_cache
from pathlib import Path
from typing import Dict, Mapping

_PROJECT_ROOT = Path(__file__).resolve().parent
_DEFAULT_ENV_PATH = _PROJECT_ROOT / ".env"


def _strip_wrapper(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in {'"', "'"}:
        return value[1:-1]
    return value


def _normalize_line(raw_line: str) -> tuple[str, str] | None:
    line = raw_line.strip()
    if not line or line.startswith("#"):
        return None
    if line.lower().startswith("export "):
        line = line[7:].strip()
    if "=" not in line:
        return None
    key, value = line.split("=", 1)
    key = key.strip()
    if not key or key.startswith("#"):
        return None
    return key, _strip_wrapper(value)


def parse_key_value_text(text: str) -> Dict[str, str]:
    """Parse `key=value` lines; later keys override earlier ones."""
    values: Dict[str, str] = {}
    for raw_line in text.splitlines():
        normalized = _normalize_line(raw_line)
        if not normalized:
            continue
        key, value = normalized
        values[key] = value
    return values


@lru_cache(maxsize=8)
def _parse_env_file(env_path: str) -> Dict[str, str]:
    path = Path(env_path)
    if not path.exists():
        return {}
    return parse_key_value_text(path.read_text())


def read_key_value_file(path: Path | str) -> Dict[str, str]:
    """Read a preset file without caching (presets are edited between runs)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    return parse_key_value_text(path.read_text())


def write_key_value_file(path: Path | str, values: Mapping[str, object], *, header: str | None = None) -> Path:
    path = Path(path)
    lines: list[str] = []
    if header:
        lines.extend(f"# {line}" for line in header.splitlines())
    for key, value in values.items():
        lines.append(f"{key}={value}")
    path.write_text("\n".join(lines) + "\n")
    return path


def get_env_value(key: str, *, env_path: Path | None = None) -> str | None:
    """Return env var from os.environ or .env (without mutating os.environ)."""
    value = os.environ.get(key)
    if value and value.strip():
        return value.strip()

    parsed = _parse_env_file(str(env_path or _DEFAULT_ENV_PATH))
    value = parsed.get(key)
    if value and value.strip():
        return value.strip()
    return None

