"""Built-in tool handlers: shell, apply_patch, list_dir,
request_permissions, and the MCP delegate slot."""

from __future__ import annotations

from pathlib import Path

from .. import sandbox as sandbox_mod
from ..sandbox import SandboxMode, SandboxTimeout, SpawnFailure, resolve_spec
from .orchestrator import ExecutionContext
from .patch import PatchConflict, PatchParseError, apply_patch, parse_patch
from .registry import ToolRegistry
from .types import (
    ParsedListDir,
    ParsedPatch,
    ParsedRequestPermissions,
    ParsedShell,
    ToolInvocation,
    ToolResult,
    ToolStatus,
    UnknownTool,
)


class PathNotFound(FileNotFoundError):
    pass


def shell_handler(invocation: ToolInvocation, ctx: ExecutionContext) -> ToolResult:
    parsed = invocation.parsed
    if not isinstance(parsed, ParsedShell):
        raise ValueError("shell invocation missing parsed argv")
    workdir = parsed.workdir or ctx.workspace_root
    try:
        outcome = sandbox_mod.execute(
            ctx.sandbox_spec,
            parsed.argv,
            workdir,
            timeout_ms=parsed.timeout_ms,
            backend=ctx.sandbox_backend,
        )
    except SandboxTimeout as exc:
        return ToolResult(invocation.call_id, ToolStatus.ERROR, f"timeout: {exc}", exit_code=None)
    except SpawnFailure as exc:
        return ToolResult(invocation.call_id, ToolStatus.ERROR, f"spawn failure: {exc}", exit_code=None)

    for token in parsed.argv[1:]:
        if "/" in token or Path(workdir, token).exists():
            ctx.record_touch(Path(workdir, token) if not Path(token).is_absolute() else token)

    merged = outcome.stdout
    if outcome.stderr:
        merged += ("\n" if merged and not merged.endswith("\n") else "") + "[stderr] " + outcome.stderr
    if outcome.violations:
        return ToolResult(
            invocation.call_id,
            ToolStatus.ERROR,
            merged + "\n[sandbox violations] " + ", ".join(outcome.violations),
            exit_code=outcome.exit_code,
        )
    status = ToolStatus.OK if outcome.exit_code == 0 else ToolStatus.ERROR
    return ToolResult(invocation.call_id, status, merged, exit_code=outcome.exit_code)


def apply_patch_handler(invocation: ToolInvocation, ctx: ExecutionContext) -> ToolResult:
    parsed = invocation.parsed
    if not isinstance(parsed, ParsedPatch):
        raise ValueError("apply_patch invocation missing patch text")
    try:
        doc = parse_patch(parsed.text)
        report = apply_patch(doc, ctx.workspace_root)
    except PatchParseError as exc:
        return ToolResult(invocation.call_id, ToolStatus.ERROR, f"patch parse error: {exc}")
    except PatchConflict as exc:
        return ToolResult(invocation.call_id, ToolStatus.ERROR, f"patch conflict: {exc}")
    for outcome in report.outcomes:
        ctx.record_touch(ctx.workspace_root / outcome.path)
    summary = "\n".join(f"{o.action}: {o.path}" for o in report.outcomes) or "empty patch"
    return ToolResult(invocation.call_id, ToolStatus.OK, summary, exit_code=0)


def list_dir(path: Path, depth: int) -> list[str]:
    """Deterministic listing: lexicographic, directories suffixed with '/',
    entries deeper than `depth` excluded. depth 0 is just the root."""
    path = Path(path)
    if not path.exists():
        raise PathNotFound(str(path))
    root_name = path.name or str(path)
    entries = [root_name + "/"] if path.is_dir() else [root_name]
    if not path.is_dir() or depth == 0:
        return entries

    def walk(current: Path, prefix: str, remaining: int) -> None:
        children = sorted(current.iterdir(), key=lambda p: p.name)
        for child in children:
            label = prefix + child.name + ("/" if child.is_dir() else "")
            entries.append(label)
            if child.is_dir() and remaining > 1:
                walk(child, prefix + child.name + "/", remaining - 1)

    walk(path, "", depth)
    return entries


def list_dir_handler(invocation: ToolInvocation, ctx: ExecutionContext) -> ToolResult:
    parsed = invocation.parsed
    if not isinstance(parsed, ParsedListDir):
        raise ValueError("list_dir invocation missing parsed path")
    target = parsed.path
    if not target.is_absolute():
        target = ctx.workspace_root / target
    try:
        entries = list_dir(target, parsed.depth)
    except PathNotFound as exc:
        return ToolResult(invocation.call_id, ToolStatus.ERROR, f"path not found: {exc}")
    return ToolResult(invocation.call_id, ToolStatus.OK, "\n".join(entries), exit_code=0)


def request_permissions_handler(invocation: ToolInvocation, ctx: ExecutionContext) -> ToolResult:
    """Runtime sandbox escalation. Full access additionally requires an
    interactive session: policy rules are not an explicit opt-in."""
    parsed = invocation.parsed
    if not isinstance(parsed, ParsedRequestPermissions):
        raise ValueError("request_permissions invocation missing scope")
    target = parsed.scope

    if target is SandboxMode.FULL_ACCESS and not ctx.turn.interactive:
        return ToolResult(
            invocation.call_id,
            ToolStatus.DENIED,
            "denied: full access escalation requires an interactive opt-in",
        )

    # The orchestrator already ran can_use_tool for this invocation and it
    # was allowed; apply the escalation.
    opt_in = ctx.full_access_opt_in or target is SandboxMode.FULL_ACCESS
    new_spec = resolve_spec(
        target,
        ctx.workspace_root,
        full_access_opt_in=opt_in,
        scratch_dir=next(iter(ctx.sandbox_spec.writable_roots[1:2]), None),
    )
    ctx.sandbox_spec = new_spec
    ctx.turn.sandbox_mode = target
    if ctx.on_mode_escalation is not None:
        ctx.on_mode_escalation(target)
    return ToolResult(
        invocation.call_id,
        ToolStatus.OK,
        f"sandbox mode is now {target.value}",
        exit_code=0,
    )


def mcp_delegate_handler(invocation: ToolInvocation, ctx: ExecutionContext) -> ToolResult:
    """Reserved delegate slot; raises unless an external delegate was
    injected in its place."""
    raise UnknownTool("mcp: no delegate configured")


def default_registry() -> ToolRegistry:
    registry = ToolRegistry()
    registry.register("shell", shell_handler)
    registry.register("apply_patch", apply_patch_handler)
    registry.register("list_dir", list_dir_handler)
    registry.register("request_permissions", request_permissions_handler)
    registry.register("mcp", mcp_delegate_handler)
    return registry
