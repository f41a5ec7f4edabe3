"""Token estimation, compaction triggering, and tool-result budgeting.

The estimator is the coarse ceil(chars/4) heuristic: deterministic, linear
in length, and cheap enough to run on every turn. Oversized tool outputs are
spilled to disk and replaced by a pointer carrying head/tail previews so a
single runaway command cannot exhaust the context window.
"""

from __future__ import annotations

import hashlib
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .protocol import InputItem


@dataclass(frozen=True)
class ContextLimits:
    model_context_tokens: int = 200_000
    compact_trigger_fraction: float = 0.8

    def __post_init__(self) -> None:
        if self.model_context_tokens <= 0:
            raise ValueError("model_context_tokens must be positive")
        if not (0.0 < self.compact_trigger_fraction <= 1.0):
            raise ValueError("compact_trigger_fraction must be in (0, 1]")


@dataclass(frozen=True)
class BudgetConfig:
    tool_result_char_threshold: int = 100_000
    head_preview: int = 2_000
    tail_preview: int = 2_000
    spill_dir: Path = field(default_factory=lambda: Path("spill"))

    def __post_init__(self) -> None:
        if self.tool_result_char_threshold <= self.head_preview + self.tail_preview:
            raise ValueError("threshold must exceed head + tail previews")


@dataclass(frozen=True)
class ToolResultPointer:
    spill_path: Path
    original_length: int
    head: str
    tail: str

    def render(self) -> str:
        return (
            f"[tool output spilled: {self.original_length} chars at {self.spill_path}]\n"
            f"--- head ---\n{self.head}\n--- tail ---\n{self.tail}"
        )


class SpillWriteFailed(OSError):
    pass


def estimate_tokens(text: str) -> int:
    # ceil(chars / 4) without float round-trips
    return (len(text) + 3) // 4


def estimate_item_tokens(item: InputItem) -> int:
    if item.token_estimate_cache is not None:
        return item.token_estimate_cache
    return estimate_tokens(item.content)


def estimate_history_tokens(history: list[InputItem]) -> int:
    return sum(estimate_item_tokens(item) for item in history)


def should_compact(history: list[InputItem], limits: ContextLimits) -> bool:
    trigger = limits.compact_trigger_fraction * limits.model_context_tokens
    return estimate_history_tokens(history) >= trigger


def budget_tool_result(output: str, cfg: BudgetConfig) -> Union[str, ToolResultPointer]:
    """Pass small outputs through unchanged; spill strictly-oversized ones.

    The spill file byte-equals the original output. A disk failure degrades
    to the truncated previews with a warning marker instead of failing the
    invocation.
    """
    if len(output) <= cfg.tool_result_char_threshold:
        return output
    head = output[: cfg.head_preview]
    tail = output[-cfg.tail_preview :]
    digest = hashlib.sha256(output.encode("utf-8")).hexdigest()[:16]
    spill_path = Path(cfg.spill_dir) / f"{digest}-{len(output)}.out"
    try:
        os.makedirs(cfg.spill_dir, exist_ok=True)
        # Hash-prefixed name makes reruns idempotent; the unique tmp suffix
        # keeps concurrent writers of identical content collision-free.
        tmp = spill_path.with_name(spill_path.name + f".tmp-{uuid.uuid4().hex}")
        tmp.write_bytes(output.encode("utf-8"))
        os.replace(tmp, spill_path)
    except OSError:
        return (
            "[warning: oversized tool output could not be spilled to disk; truncated]\n"
            f"--- head ---\n{head}\n--- tail ---\n{tail}"
        )
    return ToolResultPointer(
        spill_path=spill_path,
        original_length=len(output),
        head=head,
        tail=tail,
    )
