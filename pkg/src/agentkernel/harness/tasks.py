"""End-to-end agent tasks against scripted models.

Eight tasks exercise the full pipeline from model turn to tool dispatch to
result capture: file creation through patches, shell execution, multi-step
sequences, directory listing, git inspection, a three-tool pipeline, patch
updates, and a token-estimator accuracy probe. Each task runs several
repetitions in a fresh workspace and is judged by a deterministic checker.
"""

from __future__ import annotations

import statistics
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from ..context import BudgetConfig, estimate_tokens
from ..execpolicy import LayerOrigin, merge_layers, parse_policy
from ..features import EnhancementHooks, FlagSet, default_flags
from ..protocol import EventKind, ToolCallSpec
from ..runner import RunContext, RunOutcome, RunSummary, SessionConfig, run
from ..sandbox import SandboxMode
from ..transport import Client, KeyRing, RecoveryPolicy
from .script import ModelScript, final_turn, patch_call, shell_call, tool_turn
from .server import ChannelTransport, MockModelServer, serve

Checker = Callable[[Path, RunSummary], bool]
Fixture = Callable[[Path], None]

# Commands the scripted tasks are allowed to run without prompting.
TASK_POLICY = """
allow prefix "echo"
allow prefix "mkdir"
allow prefix "cat"
allow prefix "git status"
allow prefix "ls"
allow prefix "apply_patch"
allow prefix "list_dir"
"""


@dataclass(frozen=True)
class EvalTask:
    name: str
    tools_expected: int
    script: ModelScript
    checker: Checker
    fixture: Optional[Fixture] = None
    repetitions: int = 5
    sandbox_mode: SandboxMode = SandboxMode.WORKSPACE_WRITE


@dataclass(frozen=True)
class TaskRow:
    name: str
    repetitions: int
    successes: int
    tool_calls: int
    tools_expected: int
    mean_ms: float
    p50_ms: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[TaskRow, ...]
    total_runs: int
    total_successes: int
    hooks_total: int
    wall_time_s: float
    # every tool declaration kind seen on the wire across the whole suite
    wire_tool_kinds: frozenset[str] = frozenset()

    @property
    def all_passed(self) -> bool:
        return self.total_successes == self.total_runs


def _tool_result_outputs(summary: RunSummary) -> list[str]:
    return [
        str(e.payload.get("output", ""))
        for e in summary.events
        if e.variant is EventKind.TOOL_RESULT
    ]


def _tool_calls(summary: RunSummary) -> int:
    return sum(1 for e in summary.events if e.variant is EventKind.TOOL_CALL)


def _completed(summary: RunSummary) -> bool:
    return summary.outcome is RunOutcome.COMPLETED


def _all_results_ok(summary: RunSummary) -> bool:
    return all(
        e.payload.get("status") == "ok"
        for e in summary.events
        if e.variant is EventKind.TOOL_RESULT
    )


# -- task definitions ---------------------------------------------------------

HELLO_PATCH = """*** Begin Patch
*** Add File: hello.py
+def main():
+    print("hello from the agent")
+
+main()
*** End Patch
"""


def _create_python_file() -> EvalTask:
    def check(workspace: Path, summary: RunSummary) -> bool:
        target = workspace / "hello.py"
        return (
            _completed(summary)
            and _all_results_ok(summary)
            and target.is_file()
            and 'print("hello from the agent")' in target.read_text()
        )

    return EvalTask(
        name="create_python_file",
        tools_expected=1,
        script=ModelScript(
            entries=(
                tool_turn(patch_call("c1", HELLO_PATCH)),
                final_turn("created hello.py"),
            )
        ),
        checker=check,
    )


def _shell_echo() -> EvalTask:
    def check(workspace: Path, summary: RunSummary) -> bool:
        outputs = _tool_result_outputs(summary)
        return _completed(summary) and any("benchmark-ping" in out for out in outputs)

    return EvalTask(
        name="shell_echo",
        tools_expected=1,
        script=ModelScript(
            entries=(
                tool_turn(shell_call("c1", "echo benchmark-ping")),
                final_turn("echoed"),
            )
        ),
        checker=check,
    )


def _multi_step_file_creation() -> EvalTask:
    module_patch = """*** Begin Patch
*** Add File: srcdir/module.py
+VALUE = 41 + 1
*** End Patch
"""

    def check(workspace: Path, summary: RunSummary) -> bool:
        return (
            _completed(summary)
            and _all_results_ok(summary)
            and (workspace / "srcdir").is_dir()
            and (workspace / "srcdir" / "module.py").is_file()
        )

    return EvalTask(
        name="multi_step_file_creation",
        tools_expected=2,
        script=ModelScript(
            entries=(
                tool_turn(shell_call("c1", "mkdir srcdir")),
                tool_turn(patch_call("c2", module_patch)),
                final_turn("created srcdir/module.py"),
            )
        ),
        checker=check,
    )


def _directory_listing() -> EvalTask:
    def fixture(workspace: Path) -> None:
        (workspace / "alpha.txt").write_text("a\n")
        (workspace / "nested").mkdir()
        (workspace / "nested" / "beta.txt").write_text("b\n")

    def check(workspace: Path, summary: RunSummary) -> bool:
        outputs = "\n".join(_tool_result_outputs(summary))
        return (
            _completed(summary)
            and "alpha.txt" in outputs
            and "nested/" in outputs
            and "beta.txt" not in outputs  # depth 1 stops above it
        )

    return EvalTask(
        name="directory_listing",
        tools_expected=1,
        script=ModelScript(
            entries=(
                tool_turn(ToolCallSpec("c1", "list_dir", {"path": ".", "depth": 1})),
                final_turn("listed"),
            )
        ),
        checker=check,
        fixture=fixture,
    )


def _git_status() -> EvalTask:
    def fixture(workspace: Path) -> None:
        subprocess.run(["git", "init", "-q", str(workspace)], check=True, capture_output=True)
        (workspace / "tracked.txt").write_text("content\n")

    def check(workspace: Path, summary: RunSummary) -> bool:
        outputs = "\n".join(_tool_result_outputs(summary))
        return _completed(summary) and _all_results_ok(summary) and "tracked.txt" in outputs

    return EvalTask(
        name="git_status",
        tools_expected=1,
        script=ModelScript(
            entries=(
                tool_turn(shell_call("c1", "git status --short")),
                final_turn("inspected repository"),
            )
        ),
        checker=check,
        fixture=fixture,
    )


def _complex_pipeline() -> EvalTask:
    data_patch = """*** Begin Patch
*** Add File: out/data.txt
+first record
+second record
+third record
*** End Patch
"""

    def check(workspace: Path, summary: RunSummary) -> bool:
        outputs = _tool_result_outputs(summary)
        return (
            _completed(summary)
            and _all_results_ok(summary)
            and any("second record" in out for out in outputs)
            and (workspace / "out" / "data.txt").is_file()
        )

    return EvalTask(
        name="complex_pipeline",
        tools_expected=3,
        script=ModelScript(
            entries=(
                tool_turn(shell_call("c1", "mkdir out")),
                tool_turn(patch_call("c2", data_patch)),
                tool_turn(shell_call("c3", "cat out/data.txt")),
                final_turn("pipeline complete"),
            )
        ),
        checker=check,
    )


def _file_update_with_patch() -> EvalTask:
    update_patch = """*** Begin Patch
*** Update File: tool.py
@@
 def greet():
-    return "hello"
+    return "hello, world"

*** End Patch
"""

    def fixture(workspace: Path) -> None:
        (workspace / "tool.py").write_text('def greet():\n    return "hello"\n\nprint(greet())\n')

    def check(workspace: Path, summary: RunSummary) -> bool:
        content = (workspace / "tool.py").read_text()
        return (
            _completed(summary)
            and _all_results_ok(summary)
            and '"hello, world"' in content
            and 'return "hello"\n' not in content
        )

    return EvalTask(
        name="file_update_with_patch",
        tools_expected=2,
        script=ModelScript(
            entries=(
                tool_turn(patch_call("c1", update_patch)),
                tool_turn(shell_call("c2", "cat tool.py")),
                final_turn("updated tool.py"),
            )
        ),
        checker=check,
        fixture=fixture,
    )


def _token_estimation_accuracy() -> EvalTask:
    sample = ("lorem ipsum dolor sit amet " * 40).strip()

    def fixture(workspace: Path) -> None:
        (workspace / "sample.txt").write_text(sample)

    def check(workspace: Path, summary: RunSummary) -> bool:
        outputs = [out for out in _tool_result_outputs(summary) if "lorem" in out]
        if not _completed(summary) or not outputs:
            return False
        text = outputs[0]
        # pad to a multiple of four so doubling is exactly linear
        padded = text + "x" * ((4 - len(text) % 4) % 4)
        linear = estimate_tokens(padded * 2) == 2 * estimate_tokens(padded)
        exact = estimate_tokens(text) == (len(text) + 3) // 4
        monotone = all(
            estimate_tokens(text[: i + 1]) >= estimate_tokens(text[:i]) for i in range(0, len(text), 97)
        )
        return linear and exact and monotone

    return EvalTask(
        name="token_estimation_accuracy",
        tools_expected=1,
        script=ModelScript(
            entries=(
                tool_turn(shell_call("c1", "cat sample.txt")),
                final_turn("estimated"),
            )
        ),
        checker=check,
        fixture=fixture,
    )


def build_tasks() -> tuple[EvalTask, ...]:
    return (
        _create_python_file(),
        _shell_echo(),
        _multi_step_file_creation(),
        _directory_listing(),
        _git_status(),
        _complex_pipeline(),
        _file_update_with_patch(),
        _token_estimation_accuracy(),
    )


EVAL_TASKS = build_tasks()


def run_task_once(
    task: EvalTask,
    flags: Optional[FlagSet] = None,
    hooks: Optional[EnhancementHooks] = None,
) -> tuple[bool, float, RunSummary, MockModelServer]:
    """One repetition in a fresh workspace; returns (ok, ms, summary, server)."""
    flags = flags or default_flags()
    with tempfile.TemporaryDirectory(prefix=f"eval-{task.name}-") as tmp:
        workspace = Path(tmp)
        if task.fixture is not None:
            task.fixture(workspace)
        server = serve(task.script, transports=("channel",))
        client = Client(
            channel=ChannelTransport(server),
            sse=None,
            keyring=KeyRing(keys=("eval-key",)),
            policy=RecoveryPolicy(),
            sleeper=lambda _s: None,
        )
        policy = merge_layers([parse_policy(TASK_POLICY, LayerOrigin.USER)])
        session = SessionConfig(
            model_id="mock",
            sandbox_mode=task.sandbox_mode,
            flags=flags,
            budgets=BudgetConfig(spill_dir=workspace / ".spill"),
            interactive=False,
        )
        ctx = RunContext(
            workspace_root=workspace,
            policy=policy,
            hooks=hooks or EnhancementHooks(),
            session_id=f"eval-{task.name}",
            scratch_dir=workspace / ".scratch",
        )
        (workspace / ".scratch").mkdir(exist_ok=True)
        start = time.perf_counter()
        summary = run(session, f"run task {task.name}", client, ctx)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        ok = bool(task.checker(workspace, summary))
        return ok, elapsed_ms, summary, server


def run_eval(
    tasks: tuple[EvalTask, ...] = EVAL_TASKS,
    flags: Optional[FlagSet] = None,
    repetitions: Optional[int] = None,
) -> EvalReport:
    started = time.perf_counter()
    hooks = EnhancementHooks()
    rows: list[TaskRow] = []
    total_runs = 0
    total_success = 0
    wire_kinds: set[str] = set()
    for task in tasks:
        reps = repetitions or task.repetitions
        durations: list[float] = []
        successes = 0
        tool_calls = 0
        for _ in range(reps):
            ok, elapsed_ms, summary, server = run_task_once(task, flags=flags, hooks=hooks)
            durations.append(elapsed_ms)
            successes += 1 if ok else 0
            tool_calls = _tool_calls(summary)
            wire_kinds.update(server.tool_kinds_seen())
        rows.append(
            TaskRow(
                name=task.name,
                repetitions=reps,
                successes=successes,
                tool_calls=tool_calls,
                tools_expected=task.tools_expected,
                mean_ms=statistics.fmean(durations),
                p50_ms=statistics.median(durations),
            )
        )
        total_runs += reps
        total_success += successes
    return EvalReport(
        rows=tuple(rows),
        total_runs=total_runs,
        total_successes=total_success,
        hooks_total=hooks.total,
        wall_time_s=time.perf_counter() - started,
        wire_tool_kinds=frozenset(wire_kinds),
    )
