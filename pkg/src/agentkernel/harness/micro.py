"""Micro-benchmarks over the real subsystem code paths.

Scenarios cover tool orchestration, shell execution, patch parsing, policy
matching, token estimation, compaction triggering, state roundtrips, config
merging, and flag lookup. Timings are wall-clock per operation, reported as
mean and median milliseconds.
"""

from __future__ import annotations

import statistics
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .. import config as config_mod
from .. import state as state_mod
from ..context import BudgetConfig, ContextLimits, estimate_tokens, should_compact
from ..execpolicy import InvocationFacts, LayerOrigin, evaluate, merge_layers, parse_policy
from ..features import default_flags
from ..permissions import TurnContext
from ..protocol import InputItem, ItemKind, ToolCallSpec
from ..sandbox import SandboxMode, make_backend, resolve_spec
from ..tools import ExecutionContext, ToolRegistry, orchestrate, parse_patch
from ..tools.types import ToolResult, ToolStatus, parse_invocation


@dataclass(frozen=True)
class MicroRow:
    name: str
    iterations: int
    mean_ms: float
    p50_ms: float


@dataclass(frozen=True)
class MicroReport:
    rows: tuple[MicroRow, ...]

    def row(self, name: str) -> MicroRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)


@dataclass(frozen=True)
class Scenario:
    name: str
    iterations: int
    build: Callable[[Path], Callable[[], None]]


def _noop_handler(invocation, ctx) -> ToolResult:
    return ToolResult(call_id=invocation.call_id, status=ToolStatus.OK, output="ok", exit_code=0)


def _pipeline_ctx(workspace: Path, interactive_auto_allow: bool = False) -> ExecutionContext:
    policy = merge_layers(
        [parse_policy('allow prefix "echo"\nallow prefix "noop"', LayerOrigin.USER)]
    )
    turn = TurnContext(
        policy=policy,
        sandbox_mode=SandboxMode.WORKSPACE_WRITE,
        interactive=False,
        guardian_enabled=False,
    )
    registry = ToolRegistry()
    registry.register("noop", _noop_handler)
    from ..tools.handlers import shell_handler

    registry.register("shell", shell_handler)
    spec = resolve_spec(SandboxMode.WORKSPACE_WRITE, workspace, scratch_dir=workspace / ".scratch")
    (workspace / ".scratch").mkdir(exist_ok=True)
    return ExecutionContext(
        registry=registry,
        turn=turn,
        sandbox_spec=spec,
        sandbox_backend=make_backend("none"),
        workspace_root=workspace,
        budgets=BudgetConfig(spill_dir=workspace / ".spill"),
    )


def _scenario_orchestrator_skip(workspace: Path) -> Callable[[], None]:
    ctx = _pipeline_ctx(workspace)
    invocation = parse_invocation(ToolCallSpec("m1", "noop", {}))
    orchestrate(invocation, ctx)  # warm the approval cache

    def op() -> None:
        orchestrate(invocation, ctx)

    return op


def _scenario_orchestrator_approval(workspace: Path) -> Callable[[], None]:
    ctx = _pipeline_ctx(workspace)
    invocation = parse_invocation(ToolCallSpec("m2", "noop", {}))

    def op() -> None:
        ctx.turn.reset_turn_cache()
        orchestrate(invocation, ctx)

    return op


def _scenario_registry(workspace: Path) -> Callable[[], None]:
    registry = ToolRegistry()
    for i in range(10):
        registry.register(f"tool-{i}", _noop_handler)
    names = [f"tool-{i}" for i in range(10)]

    def op() -> None:
        for name in names:
            registry.lookup(name)

    return op


def _scenario_shell_echo(workspace: Path) -> Callable[[], None]:
    ctx = _pipeline_ctx(workspace)
    invocation = parse_invocation(ToolCallSpec("m3", "shell", {"command": "echo micro"}))
    from ..tools.handlers import shell_handler

    def op() -> None:
        shell_handler(invocation, ctx)

    return op


def _scenario_full_pipeline(workspace: Path) -> Callable[[], None]:
    ctx = _pipeline_ctx(workspace)
    invocation = parse_invocation(ToolCallSpec("m4", "shell", {"command": "echo micro"}))

    def op() -> None:
        ctx.turn.reset_turn_cache()
        orchestrate(invocation, ctx)

    return op


_ADD_PATCH = """*** Begin Patch
*** Add File: generated/example.txt
+one
+two
+three
*** End Patch
"""

_UPDATE_PATCH = """*** Begin Patch
*** Update File: module.py
@@
 import os
-OLD = 1
+NEW = 2
@@
 def main():
-    return OLD
+    return NEW
*** End Patch
"""


def _scenario_patch_add(workspace: Path) -> Callable[[], None]:
    def op() -> None:
        parse_patch(_ADD_PATCH)

    return op


def _scenario_patch_update(workspace: Path) -> Callable[[], None]:
    def op() -> None:
        parse_patch(_UPDATE_PATCH)

    return op


_FIVE_RULES = """
allow prefix "git status"
allow prefix "ls"
deny prefix "rm -rf"
allow net "api.internal" 443
deny exec "/usr/bin/sudo"
"""


def _scenario_policy(workspace: Path) -> Callable[[], None]:
    policy = merge_layers([parse_policy(_FIVE_RULES, LayerOrigin.USER)])
    facts = InvocationFacts(argv=("git", "status", "--short"), executable="git")

    def op() -> None:
        evaluate(policy, facts)

    return op


def _scenario_token_estimation(workspace: Path) -> Callable[[], None]:
    text = " ".join(["benchmark"] * 2000)

    def op() -> None:
        estimate_tokens(text)

    return op


def _scenario_should_compact(workspace: Path) -> Callable[[], None]:
    # ~100K tokens spread over 50 items
    item_text = "x" * 8000
    history = [
        InputItem(kind=ItemKind.ASSISTANT_TEXT, id=f"i{i}", content=item_text) for i in range(50)
    ]
    limits = ContextLimits(model_context_tokens=120_000, compact_trigger_fraction=0.8)

    def op() -> None:
        should_compact(history, limits)

    return op


def _scenario_state_roundtrip(workspace: Path) -> Callable[[], None]:
    store = state_mod.open_store(workspace / "bench.db")
    messages = [
        InputItem(kind=ItemKind.USER_TEXT, id=f"m{i}", content=f"message {i}") for i in range(20)
    ]
    counter = iter(range(10_000_000))

    def op() -> None:
        session_id = f"bench-{next(counter)}"
        store.persist_session(state_mod.new_session_record(session_id, {"n": 1}), messages)
        store.load_session(session_id)

    return op


_CONFIG_DOCS = [
    '[sandbox]\nmode = "read-only"\nbackend = "checking"\n[model]\nid = "gpt"\n',
    '[sandbox]\nmode = "workspace-write"\n[limits]\nmax_turns = 50\n',
    '[model]\nid = "mock"\ntimeout = 30\n',
]


def _scenario_config_merge(workspace: Path) -> Callable[[], None]:
    parsed = [config_mod.parse_config(doc) for doc in _CONFIG_DOCS]

    def op() -> None:
        config_mod.merge_configs(parsed)

    return op


def _scenario_flag_lookup(workspace: Path) -> Callable[[], None]:
    flags = default_flags()

    def op() -> None:
        flags.enabled("GUARDIAN")

    return op


MICRO_SCENARIOS: tuple[Scenario, ...] = (
    Scenario("orchestrator_skip_approval", 200, _scenario_orchestrator_skip),
    Scenario("orchestrator_with_approval", 200, _scenario_orchestrator_approval),
    Scenario("tool_registry_10_tools", 200, _scenario_registry),
    Scenario("shell_handler_echo", 25, _scenario_shell_echo),
    Scenario("full_pipeline_orch_to_shell", 25, _scenario_full_pipeline),
    Scenario("patch_parsing_add_file", 300, _scenario_patch_add),
    Scenario("patch_parsing_update_hunks", 300, _scenario_patch_update),
    Scenario("execpolicy_matching_5_rules", 500, _scenario_policy),
    Scenario("token_estimation_2k_words", 500, _scenario_token_estimation),
    Scenario("should_compact_decision", 200, _scenario_should_compact),
    Scenario("state_session_20_messages", 50, _scenario_state_roundtrip),
    Scenario("config_merge", 500, _scenario_config_merge),
    Scenario("feature_flag_lookup", 500, _scenario_flag_lookup),
)


def run_micro(scenarios: tuple[Scenario, ...] = MICRO_SCENARIOS) -> MicroReport:
    rows = []
    with tempfile.TemporaryDirectory(prefix="micro-") as tmp:
        base = Path(tmp)
        for index, scenario in enumerate(scenarios):
            workspace = base / f"s{index}"
            workspace.mkdir()
            op = scenario.build(workspace)
            op()  # warmup
            samples = []
            for _ in range(scenario.iterations):
                start = time.perf_counter()
                op()
                samples.append((time.perf_counter() - start) * 1000.0)
            rows.append(
                MicroRow(
                    name=scenario.name,
                    iterations=scenario.iterations,
                    mean_ms=statistics.fmean(samples),
                    p50_ms=statistics.median(samples),
                )
            )
    return MicroReport(rows=tuple(rows))
