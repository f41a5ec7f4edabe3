"""Three-phase context compaction: micro, snip, full.

Microcompaction elides stale tool outputs in place; snip drops small
low-value items; full compaction rewrites the history around an LLM summary
plus a bounded set of restored files, keeping a verbatim ghost snapshot of
what was thrown away.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

from .context import ContextLimits, estimate_item_tokens, estimate_tokens
from .protocol import InputItem, ItemKind

ELISION_MARKER = "[stale tool output elided]"
BOUNDARY_MARKER = "=== COMPACTION BOUNDARY ==="
SUMMARY_INSTRUCTION = (
    "Summarize the conversation below for a coding agent that will continue "
    "the task. Keep goals, decisions, file paths, and unresolved problems. "
    "Be concise."
)

RECENT_TOOL_RESULTS_KEPT = 3


class CompactionPhase(str, Enum):
    MICRO = "micro"
    SNIP = "snip"
    FULL = "full"


@dataclass(frozen=True)
class CompactionConfig:
    snip_token_threshold: int = 50
    restore_max_files: int = 5
    restore_token_budget: int = 50_000
    target_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.restore_max_files < 0 or self.restore_token_budget < 0:
            raise ValueError("restoration limits must be non-negative")


@dataclass(frozen=True)
class GhostSnapshot:
    snapshot_id: str
    items: tuple[InputItem, ...]
    created_at_turn: int


@dataclass(frozen=True)
class CompactionReport:
    phase: CompactionPhase
    removed_ids: tuple[str, ...]
    tokens_before: int
    tokens_after: int
    summary_item_id: Optional[str] = None
    restored_files: tuple[tuple[str, int], ...] = ()


class SummarizerFailed(RuntimeError):
    pass


def _total_tokens(history: Sequence[InputItem]) -> int:
    return sum(estimate_item_tokens(i) for i in history)


def microcompact(
    history: list[InputItem], keep_recent: int = RECENT_TOOL_RESULTS_KEPT
) -> tuple[list[InputItem], CompactionReport]:
    """Replace all but the newest tool results with a fixed elision marker.

    Ordering and every non-tool-result item are untouched; applying the
    phase twice yields the same history.
    """
    before = _total_tokens(history)
    result_positions = [i for i, item in enumerate(history) if item.kind is ItemKind.TOOL_RESULT]
    stale = set(result_positions[:-keep_recent] if keep_recent > 0 else result_positions)
    out: list[InputItem] = []
    removed: list[str] = []
    for i, item in enumerate(history):
        if i in stale and item.content != ELISION_MARKER:
            out.append(item.replace_content(ELISION_MARKER))
            removed.append(item.id)
        else:
            out.append(item)
    report = CompactionReport(
        phase=CompactionPhase.MICRO,
        removed_ids=tuple(removed),
        tokens_before=before,
        tokens_after=_total_tokens(out),
    )
    return out, report


def _protected_positions(history: Sequence[InputItem]) -> set[int]:
    protected: set[int] = set()
    for i, item in enumerate(history):
        if item.kind is ItemKind.SYSTEM:
            protected.add(i)
            break
    for i in range(len(history) - 1, -1, -1):
        if history[i].kind is ItemKind.USER_TEXT:
            protected.add(i)
            break
    protected.update(i for i, item in enumerate(history) if item.kind is ItemKind.SUMMARY_BOUNDARY)
    return protected


def snip_compact(
    history: list[InputItem], cfg: CompactionConfig
) -> tuple[list[InputItem], CompactionReport]:
    """Drop sub-threshold tool results and assistant chatter.

    The first system item, the last user item, and any summary boundary are
    never candidates; relative order of the survivors is preserved.
    """
    before = _total_tokens(history)
    protected = _protected_positions(history)
    out: list[InputItem] = []
    removed: list[str] = []
    for i, item in enumerate(history):
        snippable = (
            item.kind in (ItemKind.TOOL_RESULT, ItemKind.ASSISTANT_TEXT)
            and i not in protected
            and estimate_item_tokens(item) < cfg.snip_token_threshold
        )
        if snippable:
            removed.append(item.id)
        else:
            out.append(item)
    report = CompactionReport(
        phase=CompactionPhase.SNIP,
        removed_ids=tuple(removed),
        tokens_before=before,
        tokens_after=_total_tokens(out),
    )
    return out, report


@dataclass(frozen=True)
class RestoreCandidate:
    """A file touched this session, most-recently-touched candidates first."""

    path: str
    content: str


def _leading_system(history: Sequence[InputItem]) -> list[InputItem]:
    head: list[InputItem] = []
    for item in history:
        if item.kind is not ItemKind.SYSTEM:
            break
        head.append(item)
    return head


def _last_user(history: Sequence[InputItem]) -> Optional[InputItem]:
    for item in reversed(history):
        if item.kind is ItemKind.USER_TEXT:
            return item
    return None


def render_history(history: Sequence[InputItem]) -> str:
    lines = []
    for item in history:
        tag = item.kind.value
        if item.tool_name:
            tag += f":{item.tool_name}"
        lines.append(f"[{tag}] {item.content}")
    return "\n".join(lines)


def full_compact(
    history: list[InputItem],
    cfg: CompactionConfig,
    summarizer: Callable[[str], str],
    limits: ContextLimits,
    restore_candidates: Sequence[RestoreCandidate] = (),
    turn_index: int = 0,
) -> tuple[list[InputItem], CompactionReport, GhostSnapshot]:
    """Rebuild the history as summary + restored files + latest user intent.

    The summarizer is any callable from rendered history to summary text
    (the live model in production, a stub in tests). Restoration is greedy
    most-recent-first under both the file-count cap and the token budget,
    and never pushes the result past the target fraction of the context.
    """
    before = _total_tokens(history)
    snapshot = GhostSnapshot(
        snapshot_id=uuid.uuid4().hex,
        items=tuple(history),
        created_at_turn=turn_index,
    )

    try:
        summary = summarizer(SUMMARY_INSTRUCTION + "\n\n" + render_history(history))
    except Exception as exc:  # surfaced to the runner as an Error event
        raise SummarizerFailed(str(exc)) from exc

    head = _leading_system(history)
    last_user = _last_user(history)
    boundary = InputItem(
        kind=ItemKind.SUMMARY_BOUNDARY,
        id=f"summary-{snapshot.snapshot_id[:8]}",
        content=f"{BOUNDARY_MARKER}\n{summary}",
    )

    target_tokens = int(cfg.target_fraction * limits.model_context_tokens)
    base = head + [boundary]
    base_tokens = _total_tokens(base) + (estimate_item_tokens(last_user) if last_user else 0)

    restored: list[InputItem] = []
    restored_report: list[tuple[str, int]] = []
    budget_used = 0
    for candidate in restore_candidates:
        if len(restored) >= cfg.restore_max_files:
            break
        content = f"[restored file] {candidate.path}\n{candidate.content}"
        tokens = estimate_tokens(content)
        if budget_used + tokens > cfg.restore_token_budget:
            continue
        if base_tokens + budget_used + tokens > target_tokens:
            continue
        restored.append(
            InputItem(kind=ItemKind.SYSTEM, id=f"restore-{len(restored)}-{snapshot.snapshot_id[:8]}", content=content)
        )
        restored_report.append((candidate.path, tokens))
        budget_used += tokens

    out = base + restored + ([last_user] if last_user else [])
    removed = [item.id for item in history if item.id not in {o.id for o in out}]
    report = CompactionReport(
        phase=CompactionPhase.FULL,
        removed_ids=tuple(removed),
        tokens_before=before,
        tokens_after=_total_tokens(out),
        summary_item_id=boundary.id,
        restored_files=tuple(restored_report),
    )
    return out, report, snapshot


def touched_files_most_recent_first(paths: Sequence[Path | str], root: Path) -> list[RestoreCandidate]:
    """Build restore candidates from touched paths, newest touch first."""
    seen: set[str] = set()
    ordered: list[RestoreCandidate] = []
    for raw in reversed(list(paths)):
        path = Path(raw)
        if not path.is_absolute():
            path = root / path
        key = str(path)
        if key in seen or not path.is_file():
            continue
        seen.add(key)
        try:
            ordered.append(RestoreCandidate(path=key, content=path.read_text(errors="replace")))
        except OSError:
            continue
    return ordered
