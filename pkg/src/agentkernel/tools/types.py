"""Invocation and result types shared by the registry and orchestrator."""

from __future__ import annotations

import shlex
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from ..context import ToolResultPointer
from ..protocol import ToolCallSpec
from ..sandbox import MODE_NAMES, SandboxMode


class UnknownTool(KeyError):
    pass


class ToolStatus(str, Enum):
    OK = "ok"
    ERROR = "error"
    DENIED = "denied"


@dataclass(frozen=True)
class ParsedShell:
    argv: tuple[str, ...]
    workdir: Optional[Path] = None
    timeout_ms: int = 60_000


@dataclass(frozen=True)
class ParsedPatch:
    text: str


@dataclass(frozen=True)
class ParsedListDir:
    path: Path
    depth: int = 1


@dataclass(frozen=True)
class ParsedRequestPermissions:
    scope: SandboxMode


Parsed = Union[ParsedShell, ParsedPatch, ParsedListDir, ParsedRequestPermissions, None]


@dataclass(frozen=True)
class ToolInvocation:
    call_id: str
    tool_name: str
    arguments: dict
    parsed: Parsed = None


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    status: ToolStatus
    output: Union[str, ToolResultPointer]
    exit_code: Optional[int] = None
    duration_ms: float = 0.0

    def output_text(self) -> str:
        if isinstance(self.output, ToolResultPointer):
            return self.output.render()
        return self.output


@dataclass(frozen=True)
class DispatchLimits:
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")


class BadArguments(ValueError):
    pass


def _shell_argv(arguments: dict) -> tuple[str, ...]:
    command = arguments.get("command")
    if isinstance(command, list):
        if not command or not all(isinstance(c, str) for c in command):
            raise BadArguments("command list must be non-empty strings")
        return tuple(command)
    if isinstance(command, str) and command.strip():
        return tuple(shlex.split(command))
    raise BadArguments("shell requires a command string or argv list")


def parse_invocation(spec: ToolCallSpec) -> ToolInvocation:
    """Lift a wire-level tool call into a typed invocation."""
    args = spec.arguments
    parsed: Parsed = None
    if spec.name == "shell":
        timeout = args.get("timeout_ms", 60_000)
        if not isinstance(timeout, int) or timeout <= 0:
            raise BadArguments("timeout_ms must be a positive integer")
        workdir = args.get("workdir")
        parsed = ParsedShell(
            argv=_shell_argv(args),
            workdir=Path(workdir) if workdir else None,
            timeout_ms=timeout,
        )
    elif spec.name == "apply_patch":
        text = args.get("patch")
        if not isinstance(text, str):
            raise BadArguments("apply_patch requires a patch string")
        parsed = ParsedPatch(text=text)
    elif spec.name == "list_dir":
        path = args.get("path", ".")
        depth = args.get("depth", 1)
        if not isinstance(depth, int) or depth < 0:
            raise BadArguments("depth must be a non-negative integer")
        parsed = ParsedListDir(path=Path(path), depth=depth)
    elif spec.name == "request_permissions":
        scope = args.get("scope")
        mode = MODE_NAMES.get(scope) if isinstance(scope, str) else None
        if mode is None and isinstance(scope, str):
            try:
                mode = SandboxMode(scope)
            except ValueError:
                mode = None
        if mode is None:
            raise BadArguments(f"unknown permission scope {scope!r}")
        parsed = ParsedRequestPermissions(scope=mode)
    return ToolInvocation(call_id=spec.call_id, tool_name=spec.name, arguments=args, parsed=parsed)
