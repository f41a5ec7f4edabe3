"""The agent loop: send context, execute returned tool calls, repeat.

Each turn emits TurnStarted, resets the approval cache, compacts when the
context estimate crosses the trigger, sends through the recovering client,
dispatches any tool calls through the bounded orchestrator, and appends
results in input order. The loop ends on a final text response, a transport
failure, or the turn cap. Child agents fork the parent history under hard
spawn bounds.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from . import compaction as compaction_mod
from .compaction import CompactionConfig, GhostSnapshot, SummarizerFailed
from .context import BudgetConfig, ContextLimits, should_compact
from .execpolicy import MergedPolicy
from .features import EnhancementHooks, FlagSet, default_flags
from .permissions import Prompter, TurnContext
from .protocol import AgentEvent, EventKind, InputItem, ItemKind, ToolCallSpec, tool_call_item
from .sandbox import SandboxMode, make_backend, resolve_spec
from .state import Store, new_session_record
from .tools import (
    DispatchLimits,
    ExecutionContext,
    ToolRegistry,
    ToolResult,
    dispatch_batch,
    default_registry,
)
from .tools.types import BadArguments, ToolStatus, parse_invocation
from .transport import Client, ModelRequest, RecoveryExhausted, ToolDeclaration, TransportError


class RunOutcome(str, Enum):
    COMPLETED = "completed"
    MAX_TURNS_REACHED = "max_turns_reached"
    FAILED = "failed"


@dataclass(frozen=True)
class SpawnBounds:
    max_depth: int = 5
    max_children_per_parent: int = 10
    max_total_agents: int = 100

    def __post_init__(self) -> None:
        if min(self.max_depth, self.max_children_per_parent, self.max_total_agents) < 1:
            raise ValueError("spawn bounds must be positive")


class DepthExceeded(RuntimeError):
    pass


class ChildrenExceeded(RuntimeError):
    pass


class AgentsExceeded(RuntimeError):
    pass


@dataclass
class AgentNode:
    agent_id: str
    depth: int
    history: list[InputItem]
    parent_id: Optional[str] = None
    children: list[str] = field(default_factory=list)
    status: str = "running"


class AgentTree:
    """Session-wide spawn bookkeeping; check-then-register is atomic."""

    def __init__(self, bounds: SpawnBounds = SpawnBounds()) -> None:
        self.bounds = bounds
        self._lock = threading.Lock()
        self.nodes: dict[str, AgentNode] = {}
        self._counter = itertools.count(1)

    def register_root(self, history: list[InputItem]) -> AgentNode:
        with self._lock:
            node = AgentNode(agent_id="agent-0", depth=0, history=history)
            self.nodes[node.agent_id] = node
            return node

    def spawn_child(self, parent: AgentNode, task: str) -> AgentNode:
        with self._lock:
            if parent.status != "running":
                raise RuntimeError("parent agent is not running")
            if parent.depth + 1 > self.bounds.max_depth:
                raise DepthExceeded(f"child would be at depth {parent.depth + 1}")
            if len(parent.children) + 1 > self.bounds.max_children_per_parent:
                raise ChildrenExceeded(f"parent {parent.agent_id} already has {len(parent.children)} children")
            if len(self.nodes) + 1 > self.bounds.max_total_agents:
                raise AgentsExceeded(f"session already has {len(self.nodes)} agents")
            child_id = f"agent-{next(self._counter)}"
            task_item = InputItem(kind=ItemKind.USER_TEXT, id=f"{child_id}-task", content=task)
            child = AgentNode(
                agent_id=child_id,
                depth=parent.depth + 1,
                history=list(parent.history) + [task_item],
                parent_id=parent.agent_id,
            )
            self.nodes[child_id] = child
            parent.children.append(child_id)
            return child


def spawn_child(tree: AgentTree, parent: AgentNode, task: str) -> AgentNode:
    return tree.spawn_child(parent, task)


@dataclass
class SessionConfig:
    model_id: str = "mock"
    max_turns: int = 50
    sandbox_mode: SandboxMode = SandboxMode.READ_ONLY
    flags: FlagSet = field(default_factory=default_flags)
    limits: ContextLimits = field(default_factory=ContextLimits)
    budgets: BudgetConfig = field(default_factory=BudgetConfig)
    compaction: CompactionConfig = field(default_factory=CompactionConfig)
    dispatch: DispatchLimits = field(default_factory=DispatchLimits)
    interactive: bool = False
    full_access_opt_in: bool = False
    spawn_bounds: SpawnBounds = field(default_factory=SpawnBounds)
    system_prompt: str = "You are a coding agent operating on a local workspace."

    def __post_init__(self) -> None:
        if self.max_turns < 1:
            raise ValueError("max_turns must be at least 1")


@dataclass(frozen=True)
class RunSummary:
    outcome: RunOutcome
    turns_used: int
    events: tuple[AgentEvent, ...]
    final_text: Optional[str] = None
    ghost_snapshots: tuple[GhostSnapshot, ...] = ()
    session_id: str = ""


@dataclass
class RunContext:
    """Collaborators wired by the CLI or the test harness."""

    workspace_root: Path
    registry: ToolRegistry = field(default_factory=default_registry)
    policy: MergedPolicy = field(default_factory=lambda: MergedPolicy(ordered_rules=()))
    prompter: Optional[Prompter] = None
    guardian_model: Optional[Callable[[str], str]] = None
    store: Optional[Store] = None
    event_sink: Optional[Callable[[AgentEvent], None]] = None
    hooks: EnhancementHooks = field(default_factory=EnhancementHooks)
    sandbox_backend: str = "checking"
    session_id: str = "session-0"
    scratch_dir: Optional[Path] = None


def tool_declarations(registry: ToolRegistry) -> tuple[ToolDeclaration, ...]:
    return tuple(
        ToolDeclaration(name=name, description=f"built-in {name} tool", parameters={"type": "object"})
        for name in registry.names()
    )


class _Emitter:
    def __init__(self, ctx: RunContext) -> None:
        self.ctx = ctx
        self.events: list[AgentEvent] = []

    def emit(self, variant: EventKind, turn_index: int, payload: dict) -> AgentEvent:
        event = AgentEvent(variant=variant, turn_index=turn_index, payload=payload)
        self.events.append(event)
        if self.ctx.store is not None:
            self.ctx.store.append_event(self.ctx.session_id, event)
        if self.ctx.event_sink is not None:
            self.ctx.event_sink(event)
        return event


def _result_payload(result: ToolResult) -> dict:
    return {
        "call_id": result.call_id,
        "status": result.status.value,
        "output": result.output_text(),
        "exit_code": result.exit_code,
        "duration_ms": result.duration_ms,
    }


def run(session: SessionConfig, task: str, client: Client, ctx: RunContext) -> RunSummary:
    emitter = _Emitter(ctx)
    flags = session.flags
    item_ids = (f"item-{n}" for n in itertools.count(1))

    history: list[InputItem] = [
        InputItem(kind=ItemKind.SYSTEM, id=next(item_ids), content=session.system_prompt),
        InputItem(kind=ItemKind.USER_TEXT, id=next(item_ids), content=task),
    ]
    tree = AgentTree(session.spawn_bounds)
    root = tree.register_root(history)

    sandbox_spec = resolve_spec(
        session.sandbox_mode,
        ctx.workspace_root,
        full_access_opt_in=session.full_access_opt_in,
        scratch_dir=ctx.scratch_dir,
    )
    guardian_on = flags.enabled("GUARDIAN")
    turn_ctx = TurnContext(
        policy=ctx.policy,
        sandbox_mode=session.sandbox_mode,
        interactive=session.interactive,
        prompter=ctx.prompter,
        guardian_enabled=guardian_on,
        guardian_model=ctx.guardian_model,
        on_guardian_consulted=lambda: ctx.hooks.fire_if(flags, "GUARDIAN"),
    )
    exec_ctx = ExecutionContext(
        registry=ctx.registry,
        turn=turn_ctx,
        sandbox_spec=sandbox_spec,
        sandbox_backend=make_backend(ctx.sandbox_backend),
        workspace_root=ctx.workspace_root,
        budgets=session.budgets,
        full_access_opt_in=session.full_access_opt_in,
    )

    if ctx.store is not None:
        ctx.store.persist_session(
            new_session_record(ctx.session_id, {"model_id": session.model_id}), history
        )
        ctx.store.record_agent(root.agent_id, ctx.session_id, None, 0, "running")

    declarations = tool_declarations(ctx.registry)
    ghosts: list[GhostSnapshot] = []
    previous_response_id: Optional[str] = None
    final_text: Optional[str] = None
    outcome = RunOutcome.MAX_TURNS_REACHED
    turns_used = 0

    def summarizer(prompt: str) -> str:
        request = ModelRequest(
            model_id=session.model_id,
            input=(InputItem(kind=ItemKind.USER_TEXT, id=next(item_ids), content=prompt),),
        )
        return client.send_with_recovery(request).text

    for turn_index in range(session.max_turns):
        turns_used = turn_index + 1
        emitter.emit(EventKind.TURN_STARTED, turn_index, {})
        turn_ctx.reset_turn_cache()

        # Compaction escalates micro -> snip -> full, stopping as soon as
        # the estimate is back under the trigger.
        if should_compact(history, session.limits):
            ctx.hooks.fire_if(flags, "MULTI_STRATEGY_COMPACTION")
            history, _report = compaction_mod.microcompact(history)
            if should_compact(history, session.limits):
                history, _report = compaction_mod.snip_compact(history, session.compaction)
            if should_compact(history, session.limits):
                candidates = compaction_mod.touched_files_most_recent_first(
                    exec_ctx.touched_paths, ctx.workspace_root
                )
                try:
                    history, _report, ghost = compaction_mod.full_compact(
                        history,
                        session.compaction,
                        summarizer,
                        session.limits,
                        restore_candidates=candidates,
                        turn_index=turn_index,
                    )
                    ghosts.append(ghost)
                except SummarizerFailed as exc:
                    emitter.emit(EventKind.ERROR, turn_index, {"message": f"compaction failed: {exc}"})
                    continue
            root.history = history

        request = ModelRequest(
            model_id=session.model_id,
            input=tuple(history),
            tools=declarations,
            previous_response_id=previous_response_id,
        )
        try:
            response = client.send_with_recovery(request)
        except (RecoveryExhausted, TransportError) as exc:
            emitter.emit(EventKind.ERROR, turn_index, {"message": str(exc)})
            outcome = RunOutcome.FAILED
            break
        previous_response_id = response.response_id or None

        if response.usage.input_tokens or response.usage.output_tokens:
            ctx.hooks.fire_if(flags, "COST_TRACKING")
            emitter.emit(
                EventKind.TOKEN_USAGE,
                turn_index,
                {
                    "input_tokens": response.usage.input_tokens,
                    "output_tokens": response.usage.output_tokens,
                },
            )

        calls = response.tool_calls
        if not calls:
            final_text = response.text
            history.append(
                InputItem(kind=ItemKind.ASSISTANT_TEXT, id=next(item_ids), content=final_text)
            )
            emitter.emit(EventKind.TURN_COMPLETED, turn_index, {"final": True})
            outcome = RunOutcome.COMPLETED
            break

        invocations = []
        bad_results: dict[str, ToolResult] = {}
        for call in calls:
            history.append(tool_call_item(call, next(item_ids)))
            emitter.emit(
                EventKind.TOOL_CALL,
                turn_index,
                {"call_id": call.call_id, "tool_name": call.name, "arguments": call.arguments},
            )
            try:
                invocations.append(parse_invocation(call))
            except BadArguments as exc:
                bad_results[call.call_id] = ToolResult(
                    call_id=call.call_id, status=ToolStatus.ERROR, output=f"bad arguments: {exc}"
                )

        executed = dispatch_batch(
            [inv for inv in invocations if inv.call_id not in bad_results],
            exec_ctx,
            session.dispatch,
        )
        by_id = {r.call_id: r for r in executed}
        by_id.update(bad_results)
        for call in calls:
            result = by_id[call.call_id]
            emitter.emit(EventKind.TOOL_RESULT, turn_index, _result_payload(result))
            history.append(
                InputItem(
                    kind=ItemKind.TOOL_RESULT,
                    id=next(item_ids),
                    content=result.output_text(),
                    tool_name=call.name,
                    call_id=call.call_id,
                )
            )
        emitter.emit(EventKind.TURN_COMPLETED, turn_index, {"final": False})
        root.history = history

    root.status = "done" if outcome is RunOutcome.COMPLETED else "failed"
    # Post-run memory extraction hook site; the extraction model itself is
    # intentionally not wired here.
    ctx.hooks.fire_if(flags, "MEMORY_SYSTEM")

    if ctx.store is not None:
        status = outcome.value
        ctx.store.persist_session(
            new_session_record(ctx.session_id, {"model_id": session.model_id}, status=status), history
        )
        ctx.store.record_agent(root.agent_id, ctx.session_id, None, 0, root.status)

    return RunSummary(
        outcome=outcome,
        turns_used=turns_used,
        events=tuple(emitter.events),
        final_text=final_text,
        ghost_snapshots=tuple(ghosts),
        session_id=ctx.session_id,
    )


def run_child(
    tree: AgentTree,
    parent: AgentNode,
    task: str,
    session: SessionConfig,
    client: Client,
    ctx: RunContext,
) -> tuple[AgentNode, RunSummary]:
    """Spawn and run a child agent on a forked history.

    The child's final text flows back to the parent as a spawn tool_result
    (paired with a synthetic tool_call so history invariants hold)."""
    child = tree.spawn_child(parent, task)
    ctx.hooks.fire_if(session.flags, "MULTI_AGENT")
    summary = run(replace(session), task, client, ctx)
    child.status = "done" if summary.outcome is RunOutcome.COMPLETED else "failed"
    call_id = f"spawn-{child.agent_id}"
    parent.history.append(
        tool_call_item(
            ToolCallSpec(call_id=call_id, name="spawn_agent", arguments={"task": task}),
            item_id=f"{child.agent_id}-call",
        )
    )
    parent.history.append(
        InputItem(
            kind=ItemKind.TOOL_RESULT,
            id=f"{child.agent_id}-result",
            content=summary.final_text if summary.final_text is not None else f"[child {child.agent_id} {child.status}]",
            tool_name="spawn_agent",
            call_id=call_id,
        )
    )
    return child, summary
