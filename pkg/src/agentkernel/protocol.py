"""Conversation items, agent events, and wire framing.

Every other module trades in these types. Serialization is canonical
(alphabetical field order, compact separators) so golden tests can compare
bytes. The SSE parser is an incremental accumulator: feed it byte chunks in
any partition and it emits identical events.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Optional


class ItemKind(str, Enum):
    USER_TEXT = "user_text"
    ASSISTANT_TEXT = "assistant_text"
    TOOL_CALL = "tool_call"
    TOOL_RESULT = "tool_result"
    SYSTEM = "system"
    SUMMARY_BOUNDARY = "summary_boundary"


_KIND_VALUES = {k.value for k in ItemKind}


class MalformedItem(ValueError):
    """Raised by parse_items for unknown kinds or missing required fields."""

    def __init__(self, index: int, reason: str) -> None:
        super().__init__(f"item {index}: {reason}")
        self.index = index
        self.reason = reason


@dataclass(frozen=True)
class InputItem:
    kind: ItemKind
    id: str
    content: str
    tool_name: Optional[str] = None
    call_id: Optional[str] = None
    token_estimate_cache: Optional[int] = None

    def __post_init__(self) -> None:
        if self.token_estimate_cache is not None and self.token_estimate_cache < 0:
            raise ValueError("token_estimate_cache must be non-negative")

    def replace_content(self, content: str) -> "InputItem":
        # Cached estimate is invalid once content changes.
        return InputItem(
            kind=self.kind,
            id=self.id,
            content=content,
            tool_name=self.tool_name,
            call_id=self.call_id,
        )


@dataclass(frozen=True)
class ToolCallSpec:
    call_id: str
    name: str
    arguments: dict

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("tool name must be non-empty")
        if not isinstance(self.arguments, dict):
            raise ValueError("tool arguments must be a JSON object")


def tool_call_item(spec: ToolCallSpec, item_id: str) -> InputItem:
    """Encode a tool call as a history item (arguments as canonical JSON)."""
    return InputItem(
        kind=ItemKind.TOOL_CALL,
        id=item_id,
        content=canonical_json(spec.arguments),
        tool_name=spec.name,
        call_id=spec.call_id,
    )


def validate_history(items: list[InputItem]) -> None:
    """Check cross-item invariants: tool_result call_ids and boundary count."""
    seen_calls: set[str] = set()
    boundaries = 0
    for i, item in enumerate(items):
        if item.kind is ItemKind.TOOL_CALL and item.call_id:
            seen_calls.add(item.call_id)
        elif item.kind is ItemKind.TOOL_RESULT:
            if not item.call_id or item.call_id not in seen_calls:
                raise ValueError(f"item {i}: tool_result without a prior tool_call")
        elif item.kind is ItemKind.SUMMARY_BOUNDARY:
            boundaries += 1
            if boundaries > 1:
                raise ValueError(f"item {i}: more than one summary_boundary")


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def item_to_wire(item: InputItem) -> dict:
    wire: dict[str, Any] = {
        "content": item.content,
        "id": item.id,
        "type": item.kind.value,
    }
    if item.tool_name is not None:
        wire["tool_name"] = item.tool_name
    if item.call_id is not None:
        wire["call_id"] = item.call_id
    if item.token_estimate_cache is not None:
        wire["token_estimate_cache"] = item.token_estimate_cache
    return wire


def item_from_wire(wire: dict, index: int = 0) -> InputItem:
    if not isinstance(wire, dict):
        raise MalformedItem(index, "item is not an object")
    kind = wire.get("type")
    if kind not in _KIND_VALUES:
        raise MalformedItem(index, f"unsupported kind {kind!r}")
    for required in ("id", "content"):
        if required not in wire:
            raise MalformedItem(index, f"missing field {required!r}")
    cache = wire.get("token_estimate_cache")
    if cache is not None and (not isinstance(cache, int) or cache < 0):
        raise MalformedItem(index, "token_estimate_cache must be a non-negative integer")
    return InputItem(
        kind=ItemKind(kind),
        id=str(wire["id"]),
        content=str(wire["content"]),
        tool_name=wire.get("tool_name"),
        call_id=wire.get("call_id"),
        token_estimate_cache=cache,
    )


def serialize_items(items: list[InputItem]) -> str:
    """Canonical JSON array for a history; parse_items inverts it exactly."""
    return canonical_json([item_to_wire(i) for i in items])


def parse_items(text: str) -> list[InputItem]:
    data = json.loads(text)
    if not isinstance(data, list):
        raise MalformedItem(0, "top-level value is not an array")
    return [item_from_wire(wire, i) for i, wire in enumerate(data)]


# --------------------------------------------------------------------------
# Agent events


class EventKind(str, Enum):
    TURN_STARTED = "TurnStarted"
    TOOL_CALL = "ToolCall"
    TOOL_RESULT = "ToolResult"
    TURN_COMPLETED = "TurnCompleted"
    ERROR = "Error"
    TOKEN_USAGE = "TokenUsage"


def _monotonic_ms() -> int:
    return time.monotonic_ns() // 1_000_000


@dataclass(frozen=True)
class AgentEvent:
    variant: EventKind
    turn_index: int
    payload: dict
    timestamp: int = field(default_factory=_monotonic_ms)

    def to_wire(self) -> dict:
        return {
            "payload": self.payload,
            "timestamp": self.timestamp,
            "turn_index": self.turn_index,
            "variant": self.variant.value,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_wire())

    @staticmethod
    def from_wire(wire: dict) -> "AgentEvent":
        return AgentEvent(
            variant=EventKind(wire["variant"]),
            turn_index=int(wire["turn_index"]),
            payload=dict(wire["payload"]),
            timestamp=int(wire["timestamp"]),
        )


def check_event_pairing(events: list[AgentEvent]) -> None:
    """Every TurnStarted(i) must be closed by exactly one TurnCompleted(i)
    or Error(i), with tool events confined to the open interval."""
    open_turn: Optional[int] = None
    closed: set[int] = set()
    for ev in events:
        if ev.variant is EventKind.TURN_STARTED:
            if open_turn is not None:
                raise AssertionError(f"turn {ev.turn_index} started while {open_turn} open")
            if ev.turn_index in closed:
                raise AssertionError(f"turn {ev.turn_index} restarted")
            open_turn = ev.turn_index
        elif ev.variant in (EventKind.TURN_COMPLETED, EventKind.ERROR):
            if open_turn != ev.turn_index:
                raise AssertionError(f"{ev.variant.value}({ev.turn_index}) without matching start")
            closed.add(ev.turn_index)
            open_turn = None
        elif ev.variant in (EventKind.TOOL_CALL, EventKind.TOOL_RESULT):
            if open_turn != ev.turn_index:
                raise AssertionError(f"tool event outside turn {ev.turn_index}")
    if open_turn is not None:
        raise AssertionError(f"turn {open_turn} never closed")


# --------------------------------------------------------------------------
# SSE framing


@dataclass(frozen=True)
class StreamEvent:
    event_name: str
    data: str


class TruncatedStream(ValueError):
    """A stream ended mid-record; the partial record is attached."""

    def __init__(self, remainder: str) -> None:
        super().__init__(f"stream ended inside a record: {remainder[:80]!r}")
        self.remainder = remainder


class SseParser:
    """Single-consumer incremental SSE record parser.

    Records end at a blank line. Only ``event:`` and ``data:`` fields are
    honored; ``id:``/``retry:`` and comment lines are skipped. Output is
    invariant under any chunking of the same byte stream.
    """

    def __init__(self) -> None:
        self._buffer = b""
        self._event_name = ""
        self._data_lines: list[str] = []
        self._saw_field = False

    def feed(self, chunk: bytes) -> list[StreamEvent]:
        self._buffer += chunk
        events: list[StreamEvent] = []
        while True:
            newline = self._buffer.find(b"\n")
            if newline < 0:
                return events
            raw_line = self._buffer[:newline]
            self._buffer = self._buffer[newline + 1 :]
            line = raw_line.decode("utf-8").rstrip("\r")
            event = self._consume_line(line)
            if event is not None:
                events.append(event)

    def _consume_line(self, line: str) -> Optional[StreamEvent]:
        if line == "":
            if not self._saw_field:
                return None  # stray blank line between records
            event = StreamEvent(self._event_name or "message", "\n".join(self._data_lines))
            self._event_name = ""
            self._data_lines = []
            self._saw_field = False
            return event
        if line.startswith(":"):
            return None
        name, _, value = line.partition(":")
        if value.startswith(" "):
            value = value[1:]
        if name == "event":
            self._event_name = value
            self._saw_field = True
        elif name == "data":
            self._data_lines.append(value)
            self._saw_field = True
        # id: and retry: are accepted and ignored
        return None

    def finish(self) -> None:
        """Signal end of stream; raises if a record was left unterminated."""
        if self._buffer or self._saw_field:
            remainder = self._buffer.decode("utf-8", errors="replace")
            if self._saw_field:
                remainder = "\n".join(self._data_lines) + remainder
            raise TruncatedStream(remainder)


def parse_sse(chunks: Iterator[bytes]) -> list[StreamEvent]:
    """Parse a complete chunked byte stream into its SSE events."""
    parser = SseParser()
    events: list[StreamEvent] = []
    for chunk in chunks:
        events.extend(parser.feed(chunk))
    parser.finish()
    return events


def render_sse(events: list[StreamEvent]) -> bytes:
    """Inverse of parse_sse for the framing subset the mock server emits."""
    out = []
    for ev in events:
        out.append(f"event: {ev.event_name}\n")
        for line in ev.data.split("\n"):
            out.append(f"data: {line}\n")
        out.append("\n")
    return "".join(out).encode("utf-8")
