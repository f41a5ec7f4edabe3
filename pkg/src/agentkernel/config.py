"""Layered key-value configuration documents.

A small TOML subset is enough here: ``[section]`` headers, ``key = value``
with string/int/float/bool values, and ``#`` comments. Documents merge
last-writer-wins per dotted key, layered system < user < project (project
strongest).
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Mapping, Optional

DEFAULT_HOME_ENV = "CODEX_HOME"
API_BASE_ENV = "CODEX_API_BASE"
SYSTEM_CONFIG_PATH = Path("/etc/agentkernel/config.toml")
PROJECT_CONFIG_NAME = "agentkernel.toml"


class ConfigParseError(ValueError):
    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"config line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


def _parse_value(raw: str, line_no: int) -> Any:
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    raise ConfigParseError(line_no, f"unparseable value {raw!r}")


def parse_config(document: str) -> dict[str, Any]:
    """Parse one document into a flat dotted-key mapping."""
    values: dict[str, Any] = {}
    section = ""
    for line_no, raw in enumerate(document.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigParseError(line_no, "empty section name")
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigParseError(line_no, "expected key = value")
        dotted = f"{section}.{key.strip()}" if section else key.strip()
        if not key.strip():
            raise ConfigParseError(line_no, "empty key")
        values[dotted] = _parse_value(value, line_no)
    return values


def merge_configs(layers: list[Mapping[str, Any]]) -> dict[str, Any]:
    """Later layers win per key."""
    merged: dict[str, Any] = {}
    for layer in layers:
        merged.update(layer)
    return merged


def config_home(env: Optional[Mapping[str, str]] = None) -> Path:
    env = env if env is not None else os.environ
    home = env.get(DEFAULT_HOME_ENV)
    if home:
        return Path(home)
    return Path.home() / ".agentkernel"


def load_layered_config(
    project_dir: Path,
    env: Optional[Mapping[str, str]] = None,
    system_path: Optional[Path] = None,
) -> dict[str, Any]:
    """system < user < project, missing files contribute nothing."""
    paths = [
        system_path or SYSTEM_CONFIG_PATH,
        config_home(env) / "config.toml",
        Path(project_dir) / PROJECT_CONFIG_NAME,
    ]
    layers = []
    for path in paths:
        try:
            layers.append(parse_config(path.read_text()))
        except OSError:
            layers.append({})
    return merge_configs(layers)
