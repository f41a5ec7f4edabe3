"""Scripted model behavior: ordered turns interleaved with injected faults.

Scripts are line-delimited JSON, one entry per line:

    {"fault": {"kind": "http_429", "retry_after": 2}}
    {"turn": {"tool_calls": [{"call_id": "c1", "name": "shell",
                              "arguments": {"command": "echo hi"}}]}}
    {"turn": {"final": "done"}}

A fault entry is consumed by the next request instead of a turn; turns are
served in order and the last turn must be final.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from ..protocol import ToolCallSpec


class FaultKind(str, Enum):
    HTTP_400 = "http_400"
    HTTP_429 = "http_429"
    EMPTY_CHANNEL_RESPONSE = "empty_channel_response"
    QUOTA_EXHAUSTED = "quota_exhausted"


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    subtype: Optional[str] = None  # for http_400
    index: Optional[int] = None  # input item or tool index
    retry_after: Optional[float] = None  # for http_429


@dataclass(frozen=True)
class ScriptTurn:
    tool_calls: tuple[ToolCallSpec, ...] = ()
    final: Optional[str] = None

    @property
    def is_final(self) -> bool:
        return self.final is not None


Entry = Union[Fault, ScriptTurn]


class ScriptError(ValueError):
    pass


@dataclass(frozen=True)
class ModelScript:
    entries: tuple[Entry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        turns = [e for e in self.entries if isinstance(e, ScriptTurn)]
        if not turns:
            raise ScriptError("script must contain at least one turn")
        if not turns[-1].is_final:
            raise ScriptError("last scripted turn must be final")

    @property
    def turns(self) -> list[ScriptTurn]:
        return [e for e in self.entries if isinstance(e, ScriptTurn)]

    @property
    def faults(self) -> list[Fault]:
        return [e for e in self.entries if isinstance(e, Fault)]


def final_turn(text: str) -> ScriptTurn:
    return ScriptTurn(final=text)


def tool_turn(*calls: ToolCallSpec) -> ScriptTurn:
    return ScriptTurn(tool_calls=tuple(calls))


def shell_call(call_id: str, command: str, **extra) -> ToolCallSpec:
    return ToolCallSpec(call_id=call_id, name="shell", arguments={"command": command, **extra})


def patch_call(call_id: str, patch: str) -> ToolCallSpec:
    return ToolCallSpec(call_id=call_id, name="apply_patch", arguments={"patch": patch})


def _parse_entry(obj: dict, line_no: int) -> Entry:
    if "turn" in obj:
        turn = obj["turn"]
        if "final" in turn:
            return ScriptTurn(final=str(turn["final"]))
        calls = []
        for call in turn.get("tool_calls", []):
            calls.append(
                ToolCallSpec(
                    call_id=str(call["call_id"]),
                    name=str(call["name"]),
                    arguments=dict(call.get("arguments", {})),
                )
            )
        if not calls:
            raise ScriptError(f"line {line_no}: turn with neither final nor tool_calls")
        return ScriptTurn(tool_calls=tuple(calls))
    if "fault" in obj:
        fault = obj["fault"]
        kind = FaultKind(fault["kind"])
        return Fault(
            kind=kind,
            subtype=fault.get("subtype"),
            index=fault.get("index"),
            retry_after=fault.get("retry_after"),
        )
    raise ScriptError(f"line {line_no}: entry must contain 'turn' or 'fault'")


def parse_script_jsonl(text: str) -> ModelScript:
    entries: list[Entry] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScriptError(f"line {line_no}: bad JSON: {exc}") from exc
        entries.append(_parse_entry(obj, line_no))
    return ModelScript(entries=tuple(entries))


def load_script(path: Path | str) -> ModelScript:
    return parse_script_jsonl(Path(path).read_text())


def dump_script_jsonl(script: ModelScript) -> str:
    lines = []
    for entry in script.entries:
        if isinstance(entry, ScriptTurn):
            if entry.is_final:
                lines.append(json.dumps({"turn": {"final": entry.final}}))
            else:
                lines.append(
                    json.dumps(
                        {
                            "turn": {
                                "tool_calls": [
                                    {"call_id": c.call_id, "name": c.name, "arguments": c.arguments}
                                    for c in entry.tool_calls
                                ]
                            }
                        }
                    )
                )
        else:
            fault: dict = {"kind": entry.kind.value}
            if entry.subtype is not None:
                fault["subtype"] = entry.subtype
            if entry.index is not None:
                fault["index"] = entry.index
            if entry.retry_after is not None:
                fault["retry_after"] = entry.retry_after
            lines.append(json.dumps({"fault": fault}))
    return "\n".join(lines) + "\n"
