"""Model endpoint client: two transports, error classification, recovery.

The primary transport is a persistent bidirectional channel; HTTP SSE is
the fallback. Failures are classified into a closed taxonomy and the
recovery layer rewrites and resends requests: strip an unsupported
previous_response_id, drop an invalid input item by index, drop an
unsupported tool declaration, trim oldest items on context overflow, back
off on 429 honoring Retry-After, rotate keys on quota exhaustion, and fall
back to SSE when the channel comes back empty. A response with zero output
items is never success.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Protocol, Sequence

from .context import estimate_tokens
from .protocol import (
    InputItem,
    ItemKind,
    MalformedItem,
    SseParser,
    StreamEvent,
    ToolCallSpec,
    TruncatedStream,
    canonical_json,
    item_from_wire,
    item_to_wire,
)

FUNCTION_TOOL_KIND = "function"


@dataclass(frozen=True)
class ToolDeclaration:
    name: str
    description: str = ""
    parameters: dict = field(default_factory=dict)
    kind: str = FUNCTION_TOOL_KIND

    def to_wire(self) -> dict:
        return {
            "description": self.description,
            "name": self.name,
            "parameters": self.parameters,
            "type": self.kind,
        }


@dataclass(frozen=True)
class ModelRequest:
    model_id: str
    input: tuple[InputItem, ...]
    tools: tuple[ToolDeclaration, ...] = ()
    previous_response_id: Optional[str] = None
    max_output_tokens: Optional[int] = None

    def __post_init__(self) -> None:
        for tool in self.tools:
            if tool.kind != FUNCTION_TOOL_KIND:
                raise ValueError(f"tool {tool.name!r} must use the function wire kind")

    def to_wire(self) -> dict:
        wire: dict = {
            "input": [item_to_wire(i) for i in self.input],
            "model": self.model_id,
            "tools": [t.to_wire() for t in self.tools],
        }
        if self.previous_response_id is not None:
            wire["previous_response_id"] = self.previous_response_id
        if self.max_output_tokens is not None:
            wire["max_output_tokens"] = self.max_output_tokens
        return wire

    def to_json(self) -> str:
        return canonical_json(self.to_wire())


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0


@dataclass(frozen=True)
class ModelResponse:
    response_id: str
    output: tuple[InputItem, ...]
    usage: TokenUsage = TokenUsage()

    @property
    def tool_calls(self) -> list[ToolCallSpec]:
        calls = []
        for item in self.output:
            if item.kind is ItemKind.TOOL_CALL and item.tool_name and item.call_id:
                try:
                    arguments = json.loads(item.content) if item.content else {}
                except json.JSONDecodeError:
                    arguments = {}
                calls.append(ToolCallSpec(call_id=item.call_id, name=item.tool_name, arguments=arguments))
        return calls

    @property
    def text(self) -> str:
        return "\n".join(i.content for i in self.output if i.kind is ItemKind.ASSISTANT_TEXT)


# --------------------------------------------------------------------------
# Error taxonomy


class ErrorClass(str, Enum):
    BAD_REQUEST = "bad_request"
    RATE_LIMITED = "rate_limited"
    QUOTA_EXHAUSTED = "quota_exhausted"
    NETWORK = "network"
    SERVER = "server"


class BadRequestSubtype(str, Enum):
    UNSUPPORTED_PREVIOUS_RESPONSE_ID = "unsupported_previous_response_id"
    INVALID_INPUT_ITEM = "invalid_input_item"
    UNSUPPORTED_TOOL_TYPE = "unsupported_tool_type"
    CONTEXT_OVERFLOW = "context_overflow"


@dataclass(frozen=True)
class TransportError(Exception):
    classification: ErrorClass
    raw_status: int
    raw_body: str
    subtype: Optional[BadRequestSubtype] = None
    input_index: Optional[int] = None
    tool_index: Optional[int] = None
    retry_after_seconds: Optional[float] = None

    def __str__(self) -> str:
        extra = f" subtype={self.subtype.value}" if self.subtype else ""
        return f"{self.classification.value} (status {self.raw_status}){extra}"


class EmptyResponse(Exception):
    """The endpoint answered with zero output items; never success."""


class RecoveryExhausted(Exception):
    def __init__(self, attempts: list[str]) -> None:
        super().__init__("recovery exhausted after attempts: " + "; ".join(attempts))
        self.attempts = attempts


_INDEXED = re.compile(r"\[(\d+)\]")


def classify_error(status: int, body: str, retry_after_header: Optional[str] = None) -> TransportError:
    """Map an endpoint error envelope onto the recovery taxonomy."""
    try:
        envelope = json.loads(body).get("error", {})
    except (json.JSONDecodeError, AttributeError):
        envelope = {}
    code = envelope.get("code", "")
    param = envelope.get("param", "") or ""
    message = envelope.get("message", "") or ""

    if status == 429:
        if code == "insufficient_quota":
            return TransportError(ErrorClass.QUOTA_EXHAUSTED, status, body)
        retry_after: Optional[float] = None
        for source in (retry_after_header, envelope.get("retry_after")):
            if source is None:
                continue
            try:
                retry_after = float(source)
                break
            except (TypeError, ValueError):
                continue
        return TransportError(ErrorClass.RATE_LIMITED, status, body, retry_after_seconds=retry_after)
    if status == 400:
        if param == "previous_response_id" or code == "unsupported_parameter":
            return TransportError(
                ErrorClass.BAD_REQUEST, status, body, subtype=BadRequestSubtype.UNSUPPORTED_PREVIOUS_RESPONSE_ID
            )
        if code == "invalid_value" and param.startswith("input"):
            match = _INDEXED.search(param)
            index = int(match.group(1)) if match else None
            return TransportError(
                ErrorClass.BAD_REQUEST, status, body,
                subtype=BadRequestSubtype.INVALID_INPUT_ITEM, input_index=index,
            )
        if code == "unsupported_tool_type" or param.startswith("tools"):
            match = _INDEXED.search(param)
            index = int(match.group(1)) if match else None
            return TransportError(
                ErrorClass.BAD_REQUEST, status, body,
                subtype=BadRequestSubtype.UNSUPPORTED_TOOL_TYPE, tool_index=index,
            )
        if code == "context_overflow" or "context window" in message:
            return TransportError(
                ErrorClass.BAD_REQUEST, status, body, subtype=BadRequestSubtype.CONTEXT_OVERFLOW
            )
        return TransportError(ErrorClass.BAD_REQUEST, status, body)
    if status >= 500:
        return TransportError(ErrorClass.SERVER, status, body)
    return TransportError(ErrorClass.NETWORK, status, body)


# --------------------------------------------------------------------------
# Transports


class Transport(Protocol):
    name: str

    def request(self, request: ModelRequest, api_key: str) -> list[StreamEvent]: ...


def assemble_response(events: Sequence[StreamEvent]) -> ModelResponse:
    output: list[InputItem] = []
    response_id = ""
    usage = TokenUsage()
    for event in events:
        if event.event_name == "response.output_item":
            payload = json.loads(event.data)
            output.append(item_from_wire(payload["item"]))
        elif event.event_name == "response.completed":
            payload = json.loads(event.data)
            response_id = payload.get("response_id", "")
            raw = payload.get("usage", {})
            usage = TokenUsage(
                input_tokens=int(raw.get("input_tokens", 0)),
                output_tokens=int(raw.get("output_tokens", 0)),
            )
        elif event.event_name == "response.error":
            payload = json.loads(event.data)
            raise classify_error(int(payload.get("status", 500)), event.data)
    if not output:
        raise EmptyResponse("assembled response has zero output items")
    return ModelResponse(response_id=response_id, output=tuple(output), usage=usage)


class HttpSseTransport:
    """POST the request and parse the SSE body incrementally."""

    name = "sse"

    def __init__(self, base_url: str, client=None) -> None:
        import httpx

        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=30.0)

    def request(self, request: ModelRequest, api_key: str) -> list[StreamEvent]:
        import httpx

        url = f"{self.base_url}/v1/responses"
        headers = {
            "Authorization": f"Bearer {api_key}",
            "Accept": "text/event-stream",
            "Content-Type": "application/json",
        }
        try:
            with self._client.stream("POST", url, content=request.to_json(), headers=headers) as response:
                if response.status_code != 200:
                    body = response.read().decode("utf-8", errors="replace")
                    raise classify_error(response.status_code, body, response.headers.get("Retry-After"))
                parser = SseParser()
                events: list[StreamEvent] = []
                for chunk in response.iter_bytes():
                    events.extend(parser.feed(chunk))
                parser.finish()
                return events
        except TruncatedStream as exc:
            # fail visible: a half-delivered record is a transport fault
            raise TransportError(ErrorClass.NETWORK, 0, exc.remainder) from exc
        except httpx.HTTPError as exc:
            raise TransportError(ErrorClass.NETWORK, 0, str(exc)) from exc

    def close(self) -> None:
        self._client.close()


@dataclass(frozen=True)
class KeyRing:
    keys: tuple[str, ...]
    active_index: int = 0

    def __post_init__(self) -> None:
        if not self.keys:
            raise ValueError("key ring must hold at least one key")
        if not (0 <= self.active_index < len(self.keys)):
            raise ValueError("active_index out of range")

    @property
    def active(self) -> str:
        return self.keys[self.active_index]

    def rotated(self) -> "KeyRing":
        return KeyRing(self.keys, (self.active_index + 1) % len(self.keys))


@dataclass(frozen=True)
class RecoveryPolicy:
    max_retries: int = 5
    backoff_base_seconds: float = 1.0
    backoff_multiplier: float = 2.0
    backoff_cap_seconds: float = 30.0
    # When set, context-overflow recovery trims oldest unprotected items
    # until the estimate fits this budget; otherwise it trims one at a time.
    context_token_target: Optional[int] = None


PROTECTED_TRIM_KINDS = (ItemKind.SUMMARY_BOUNDARY,)


def _protected_trim_positions(items: Sequence[InputItem]) -> set[int]:
    protected: set[int] = set()
    for i, item in enumerate(items):
        if item.kind is ItemKind.SYSTEM:
            protected.add(i)
            break
    for i in range(len(items) - 1, -1, -1):
        if items[i].kind is ItemKind.USER_TEXT:
            protected.add(i)
            break
    protected.update(i for i, item in enumerate(items) if item.kind in PROTECTED_TRIM_KINDS)
    return protected


def trim_for_context(request: ModelRequest, target_tokens: Optional[int]) -> ModelRequest:
    """Drop oldest unprotected input items; always removes at least one."""
    items = list(request.input)
    protected = _protected_trim_positions(items)
    removable = [i for i in range(len(items)) if i not in protected]
    if not removable:
        return request

    def total(current: list[Optional[InputItem]]) -> int:
        return sum(estimate_tokens(i.content) for i in current if i is not None)

    working: list[Optional[InputItem]] = list(items)
    removed = 0
    for index in removable:
        if removed > 0 and (target_tokens is None or total(working) <= target_tokens):
            break
        working[index] = None
        removed += 1
    return replace(request, input=tuple(i for i in working if i is not None))


class Client:
    """One session's model client. Not shared across sessions."""

    def __init__(
        self,
        channel: Optional[Transport],
        sse: Optional[Transport],
        keyring: KeyRing,
        policy: RecoveryPolicy = RecoveryPolicy(),
        sleeper: Callable[[float], None] = time.sleep,
        preferred: str = "channel",
    ) -> None:
        if channel is None and sse is None:
            raise ValueError("at least one transport is required")
        self.channel = channel
        self.sse = sse
        self.keyring = keyring
        self.policy = policy
        self.sleeper = sleeper
        self.preferred = preferred
        self.attempt_log: list[str] = []

    def _transport(self, name: str) -> Optional[Transport]:
        return self.channel if name == "channel" else self.sse

    def send(self, request: ModelRequest, transport_pref: Optional[str] = None) -> ModelResponse:
        """Single attempt on one transport; raises classified errors."""
        name = transport_pref or self.preferred
        transport = self._transport(name) or self._transport("sse" if name == "channel" else "channel")
        if transport is None:
            raise TransportError(ErrorClass.NETWORK, 0, "no transport available")
        events = transport.request(request, self.keyring.active)
        try:
            return assemble_response(events)
        except (EmptyResponse, TransportError):
            raise
        except (json.JSONDecodeError, KeyError, MalformedItem, ValueError) as exc:
            # malformed frame: classified as a network fault with the raw
            # payload preserved for inspection
            raw = "\n".join(f"{e.event_name}: {e.data}" for e in events)
            raise TransportError(ErrorClass.NETWORK, 0, raw or str(exc)) from exc

    def send_with_recovery(self, request: ModelRequest) -> ModelResponse:
        attempts = self.attempt_log = []
        current = request
        transport_name = self.preferred if self._transport(self.preferred) else "sse"
        consecutive_429 = 0
        consecutive_quota = 0
        last_wait = 0.0
        fell_back_for_empty = False

        for attempt in range(self.policy.max_retries + 1):
            try:
                response = self.send(current, transport_name)
                attempts.append(f"{transport_name}: ok")
                return response
            except EmptyResponse:
                attempts.append(f"{transport_name}: empty response")
                if transport_name == "channel" and self.sse is not None and not fell_back_for_empty:
                    # Retry exactly once over the event-stream transport.
                    fell_back_for_empty = True
                    transport_name = "sse"
                    continue
                raise RecoveryExhausted(attempts) from None
            except TransportError as error:
                attempts.append(f"{transport_name}: {error}")
                consecutive_429 = consecutive_429 + 1 if error.classification is ErrorClass.RATE_LIMITED else 0
                if error.classification is ErrorClass.QUOTA_EXHAUSTED:
                    consecutive_quota += 1
                    if consecutive_quota > len(self.keyring.keys):
                        raise RecoveryExhausted(attempts) from error
                    self.keyring = self.keyring.rotated()
                    attempts.append(f"rotated key to index {self.keyring.active_index}")
                    continue
                consecutive_quota = 0
                if error.classification is ErrorClass.RATE_LIMITED:
                    backoff = min(
                        self.policy.backoff_base_seconds * (self.policy.backoff_multiplier ** (consecutive_429 - 1)),
                        self.policy.backoff_cap_seconds,
                    )
                    # Retry-After is a lower bound; waits never shrink while
                    # the endpoint keeps rate-limiting us.
                    floor = last_wait if consecutive_429 > 1 else 0.0
                    wait = max(error.retry_after_seconds or 0.0, backoff, floor)
                    last_wait = wait
                    attempts.append(f"backoff {wait:.3f}s")
                    self.sleeper(wait)
                    continue
                if error.classification is ErrorClass.BAD_REQUEST:
                    rewritten = self._rewrite_bad_request(current, error, attempts)
                    if rewritten is None:
                        raise RecoveryExhausted(attempts) from error
                    current = rewritten
                    continue
                # network / server: plain retry with base backoff
                self.sleeper(self.policy.backoff_base_seconds)
                continue
        raise RecoveryExhausted(attempts)

    def _rewrite_bad_request(
        self, request: ModelRequest, error: TransportError, attempts: list[str]
    ) -> Optional[ModelRequest]:
        if error.subtype is BadRequestSubtype.UNSUPPORTED_PREVIOUS_RESPONSE_ID:
            attempts.append("stripped previous_response_id")
            return replace(request, previous_response_id=None)
        if error.subtype is BadRequestSubtype.INVALID_INPUT_ITEM and error.input_index is not None:
            if not (0 <= error.input_index < len(request.input)):
                return None
            attempts.append(f"removed input[{error.input_index}]")
            items = list(request.input)
            del items[error.input_index]
            return replace(request, input=tuple(items))
        if error.subtype is BadRequestSubtype.UNSUPPORTED_TOOL_TYPE:
            if not request.tools:
                return None
            index = error.tool_index if error.tool_index is not None else 0
            if not (0 <= index < len(request.tools)):
                return None
            attempts.append(f"dropped tool declaration {request.tools[index].name!r}")
            tools = list(request.tools)
            del tools[index]
            return replace(request, tools=tuple(tools))
        if error.subtype is BadRequestSubtype.CONTEXT_OVERFLOW:
            trimmed = trim_for_context(request, self.policy.context_token_target)
            if len(trimmed.input) == len(request.input):
                return None
            attempts.append(f"trimmed input {len(request.input)} -> {len(trimmed.input)} items")
            return trimmed
        return None
