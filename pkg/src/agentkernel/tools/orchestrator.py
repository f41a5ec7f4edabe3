"""Three-stage tool pipeline and bounded concurrent dispatch.

Every invocation flows policy -> approval -> execution; a denial at either
check returns a denied result without running the handler, so a denied call
can never touch the filesystem. Batches run on a bounded pool and results
come back in input order with per-invocation failures isolated.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from ..context import BudgetConfig, budget_tool_result
from ..permissions import ApprovalDecision, TurnContext, can_use_tool
from ..sandbox import SandboxSpec
from .registry import ToolRegistry
from .types import DispatchLimits, ToolInvocation, ToolResult, ToolStatus, UnknownTool


@dataclass
class ExecutionContext:
    """Everything a handler may need, threaded through the orchestrator."""

    registry: ToolRegistry
    turn: TurnContext
    sandbox_spec: SandboxSpec
    sandbox_backend: object
    workspace_root: Path
    budgets: BudgetConfig
    # Paths read or written by tools this session, oldest first; feeds
    # post-compaction file restoration.
    touched_paths: list[str] = field(default_factory=list)
    # Session-level mutable state for permission escalation.
    on_mode_escalation: Optional[Callable[[object], None]] = None
    full_access_opt_in: bool = False
    _touch_lock: threading.Lock = field(default_factory=threading.Lock)

    def record_touch(self, path: Path | str) -> None:
        with self._touch_lock:
            self.touched_paths.append(str(path))


class _ProbeCounter:
    """Observable concurrency probe used by dispatch tests."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.current = 0
        self.peak = 0

    def __enter__(self) -> "_ProbeCounter":
        with self._lock:
            self.current += 1
            self.peak = max(self.peak, self.current)
        return self

    def __exit__(self, *exc) -> None:
        with self._lock:
            self.current -= 1


def orchestrate(invocation: ToolInvocation, ctx: ExecutionContext) -> ToolResult:
    start = time.perf_counter()
    handler = ctx.registry.lookup(invocation.tool_name)  # UnknownTool propagates

    decision: ApprovalDecision = can_use_tool(ctx.turn, invocation)
    if not decision.allowed():
        return ToolResult(
            call_id=invocation.call_id,
            status=ToolStatus.DENIED,
            output=f"denied by {decision.layer.value} layer"
            + (f": {decision.rationale}" if decision.rationale else ""),
            duration_ms=(time.perf_counter() - start) * 1000.0,
        )

    try:
        result = handler(invocation, ctx)
    except Exception as exc:
        return ToolResult(
            call_id=invocation.call_id,
            status=ToolStatus.ERROR,
            output=f"{type(exc).__name__}: {exc}",
            duration_ms=(time.perf_counter() - start) * 1000.0,
        )

    output = result.output
    if result.status is ToolStatus.OK and isinstance(output, str):
        output = budget_tool_result(output, ctx.budgets)
    return ToolResult(
        call_id=result.call_id,
        status=result.status,
        output=output,
        exit_code=result.exit_code,
        duration_ms=(time.perf_counter() - start) * 1000.0,
    )


def dispatch_batch(
    invocations: Sequence[ToolInvocation],
    ctx: ExecutionContext,
    limits: DispatchLimits = DispatchLimits(),
    probe: Optional[_ProbeCounter] = None,
) -> list[ToolResult]:
    """Run a batch with at most max_in_flight handlers executing at once.

    Results preserve input order; one failing invocation never cancels its
    siblings.
    """
    if not invocations:
        return []
    probe = probe or _ProbeCounter()

    def run_one(invocation: ToolInvocation) -> ToolResult:
        with probe:
            try:
                return orchestrate(invocation, ctx)
            except UnknownTool:
                return ToolResult(
                    call_id=invocation.call_id,
                    status=ToolStatus.ERROR,
                    output=f"unknown tool: {invocation.tool_name}",
                )

    if limits.max_in_flight == 1 or len(invocations) == 1:
        return [run_one(inv) for inv in invocations]
    with ThreadPoolExecutor(max_workers=limits.max_in_flight) as pool:
        return list(pool.map(run_one, invocations))


def new_probe() -> _ProbeCounter:
    return _ProbeCounter()
