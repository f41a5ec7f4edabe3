"""Sandbox mode resolution and command execution through pluggable backends.

Real OS isolation is out of reach here, so two backends ship: "none" spawns
directly, "checking" adds advisory enforcement, i.e. pre-exec screening of
path-like argv targets plus a post-exec diff of the workspace tree. A write
outside the writable roots surfaces as a violation, not a kernel denial.
"""

from __future__ import annotations

import os
import subprocess
import tempfile
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence


class SandboxMode(str, Enum):
    READ_ONLY = "read_only"
    WORKSPACE_WRITE = "workspace_write"
    FULL_ACCESS = "full_access"


# CLI-facing names; "danger-full-access" doubles as the explicit opt-in.
MODE_NAMES = {
    "read-only": SandboxMode.READ_ONLY,
    "workspace-write": SandboxMode.WORKSPACE_WRITE,
    "danger-full-access": SandboxMode.FULL_ACCESS,
}

_ESCALATION_RANK = {
    SandboxMode.READ_ONLY: 0,
    SandboxMode.WORKSPACE_WRITE: 1,
    SandboxMode.FULL_ACCESS: 2,
}


class OptInRequired(PermissionError):
    pass


class SpawnFailure(OSError):
    pass


class SandboxTimeout(TimeoutError):
    def __init__(self, timeout_ms: int) -> None:
        super().__init__(f"command killed after {timeout_ms} ms")
        self.timeout_ms = timeout_ms


@dataclass(frozen=True)
class SandboxSpec:
    mode: SandboxMode
    writable_roots: tuple[Path, ...]
    network_allowed: bool


@dataclass(frozen=True)
class ExecOutcome:
    exit_code: Optional[int]
    stdout: str
    stderr: str
    duration_ms: float
    violations: tuple[str, ...] = ()


def mode_allows(lower: SandboxMode, higher: SandboxMode) -> bool:
    return _ESCALATION_RANK[lower] <= _ESCALATION_RANK[higher]


def resolve_spec(
    mode: SandboxMode,
    workspace_root: Path,
    full_access_opt_in: bool = False,
    scratch_dir: Optional[Path] = None,
) -> SandboxSpec:
    workspace_root = Path(workspace_root)
    if not workspace_root.is_absolute():
        raise ValueError("workspace_root must be absolute")
    if mode is SandboxMode.READ_ONLY:
        return SandboxSpec(mode=mode, writable_roots=(), network_allowed=False)
    if mode is SandboxMode.WORKSPACE_WRITE:
        scratch = scratch_dir or Path(tempfile.mkdtemp(prefix="agentkernel-scratch-"))
        return SandboxSpec(mode=mode, writable_roots=(workspace_root, Path(scratch)), network_allowed=False)
    if not full_access_opt_in:
        raise OptInRequired("full access requires explicit opt-in")
    return SandboxSpec(mode=mode, writable_roots=(), network_allowed=True)


# --------------------------------------------------------------------------
# Backends

_SCRUBBED_ENV_KEYS = ("PATH", "HOME", "LANG")

# Commands whose path-like arguments imply a write at that path.
_WRITE_VERBS = {"touch", "tee", "cp", "mv", "mkdir", "rm", "rmdir", "ln", "truncate", "install"}


def scrubbed_env(extra: Optional[Mapping[str, str]] = None) -> dict[str, str]:
    env = {k: os.environ[k] for k in _SCRUBBED_ENV_KEYS if k in os.environ}
    if extra:
        env.update(extra)
    return env


def _under_any(path: Path, roots: Sequence[Path]) -> bool:
    for root in roots:
        try:
            path.resolve().relative_to(Path(root).resolve())
            return True
        except ValueError:
            continue
    return False


def _spawn(argv: Sequence[str], workdir: Path, timeout_ms: int, env: Optional[dict]) -> ExecOutcome:
    start = time.perf_counter()
    try:
        proc = subprocess.run(
            list(argv),
            cwd=str(workdir),
            env=env if env is not None else scrubbed_env(),
            capture_output=True,
            text=True,
            timeout=timeout_ms / 1000.0,
        )
    except subprocess.TimeoutExpired:
        raise SandboxTimeout(timeout_ms) from None
    except OSError as exc:
        raise SpawnFailure(str(exc)) from exc
    duration = (time.perf_counter() - start) * 1000.0
    return ExecOutcome(
        exit_code=proc.returncode,
        stdout=proc.stdout,
        stderr=proc.stderr,
        duration_ms=duration,
    )


class NoneBackend:
    """Spawn directly; no enforcement beyond the timeout."""

    name = "none"

    def execute(self, spec: SandboxSpec, argv: Sequence[str], workdir: Path, timeout_ms: int) -> ExecOutcome:
        return _spawn(argv, workdir, timeout_ms, env=None)


class CheckingBackend:
    """Advisory enforcement: static argv screening + workspace diff."""

    name = "checking"

    def execute(self, spec: SandboxSpec, argv: Sequence[str], workdir: Path, timeout_ms: int) -> ExecOutcome:
        workdir = Path(workdir)
        if spec.mode is SandboxMode.FULL_ACCESS:
            return _spawn(argv, workdir, timeout_ms, env=None)

        violations = self._screen_argv(spec, argv, workdir)
        if violations:
            # Fail before spawning: the command names a write target the
            # mode does not permit.
            return ExecOutcome(
                exit_code=None,
                stdout="",
                stderr="sandbox: write target outside writable roots: " + ", ".join(violations),
                duration_ms=0.0,
                violations=tuple(violations),
            )

        before = self._snapshot(workdir)
        outcome = _spawn(argv, workdir, timeout_ms, env=None)
        changed = self._diff(before, self._snapshot(workdir))
        illegal = [p for p in changed if not _under_any(Path(p), spec.writable_roots)]
        if illegal:
            return ExecOutcome(
                exit_code=outcome.exit_code,
                stdout=outcome.stdout,
                stderr=outcome.stderr,
                duration_ms=outcome.duration_ms,
                violations=tuple(sorted(illegal)),
            )
        return outcome

    @staticmethod
    def _screen_argv(spec: SandboxSpec, argv: Sequence[str], workdir: Path) -> list[str]:
        if not argv or Path(argv[0]).name not in _WRITE_VERBS:
            return []
        violations = []
        for token in argv[1:]:
            if token.startswith("-"):
                continue
            path = Path(token)
            if not path.is_absolute():
                path = workdir / path
            if not _under_any(path, spec.writable_roots):
                violations.append(str(path))
        return violations

    @staticmethod
    def _snapshot(root: Path) -> dict[str, tuple[int, int]]:
        snap: dict[str, tuple[int, int]] = {}
        if not root.exists():
            return snap
        for dirpath, _dirnames, filenames in os.walk(root):
            for name in filenames:
                full = Path(dirpath) / name
                try:
                    st = full.stat()
                except OSError:
                    continue
                snap[str(full)] = (st.st_mtime_ns, st.st_size)
        return snap

    @staticmethod
    def _diff(before: dict, after: dict) -> list[str]:
        changed = [p for p, sig in after.items() if before.get(p) != sig]
        changed.extend(p for p in before if p not in after)
        return changed


BACKENDS = {
    "none": NoneBackend,
    "checking": CheckingBackend,
}


def make_backend(name: str):
    try:
        return BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown sandbox backend {name!r}") from None


def execute(
    spec: SandboxSpec,
    argv: Sequence[str],
    workdir: Path,
    timeout_ms: int = 60_000,
    backend=None,
) -> ExecOutcome:
    backend = backend or CheckingBackend()
    return backend.execute(spec, argv, Path(workdir), timeout_ms)
