"""Scripted mock model server behind both transports.

The channel transport is an in-process duplex call; the HTTP transport is a
real loopback server speaking the same wire grammar over SSE, so the
streaming client parses actual bytes. Every request is recorded for
assertions (tool declaration kinds, recovery rewrites, key rotation).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Sequence

from ..context import estimate_tokens
from ..protocol import StreamEvent, canonical_json, render_sse
from ..transport import ModelRequest, classify_error
from .script import Fault, FaultKind, ModelScript, ScriptTurn


@dataclass(frozen=True)
class RecordedRequest:
    transport: str
    wire: dict
    api_key: str


@dataclass(frozen=True)
class ServedResponse:
    events: tuple[StreamEvent, ...] = ()
    status: int = 200
    error_body: Optional[str] = None
    headers: dict = field(default_factory=dict)

    @property
    def is_error(self) -> bool:
        return self.error_body is not None


def _error_body(error_type: str, code: str, message: str, param: Optional[str] = None) -> str:
    envelope: dict = {"code": code, "message": message, "type": error_type}
    if param is not None:
        envelope["param"] = param
    return canonical_json({"error": envelope})


def _fault_response(fault: Fault) -> ServedResponse:
    if fault.kind is FaultKind.HTTP_400:
        subtype = fault.subtype or "invalid_request"
        if subtype == "unsupported_previous_response_id":
            body = _error_body(
                "invalid_request_error", "unsupported_parameter",
                "previous_response_id is not supported here", param="previous_response_id",
            )
        elif subtype == "invalid_input_item":
            index = fault.index if fault.index is not None else 0
            body = _error_body(
                "invalid_request_error", "invalid_value",
                f"input[{index}] has an unsupported content item", param=f"input[{index}]",
            )
        elif subtype == "unsupported_tool_type":
            index = fault.index if fault.index is not None else 0
            body = _error_body(
                "invalid_request_error", "unsupported_tool_type",
                "tool type is not supported by this endpoint", param=f"tools[{index}].type",
            )
        elif subtype == "context_overflow":
            body = _error_body(
                "invalid_request_error", "context_overflow", "context window exceeded"
            )
        else:
            body = _error_body("invalid_request_error", "invalid_request", "bad request")
        return ServedResponse(status=400, error_body=body)
    if fault.kind is FaultKind.HTTP_429:
        headers = {}
        if fault.retry_after is not None:
            headers["Retry-After"] = str(int(fault.retry_after))
        return ServedResponse(
            status=429,
            error_body=_error_body("rate_limit_error", "rate_limit_exceeded", "slow down"),
            headers=headers,
        )
    if fault.kind is FaultKind.QUOTA_EXHAUSTED:
        return ServedResponse(
            status=429,
            error_body=_error_body("rate_limit_error", "insufficient_quota", "quota exhausted"),
        )
    # EMPTY_CHANNEL_RESPONSE: zero events, a successful-looking nothing.
    return ServedResponse(events=())


class MockModelServer:
    """One scripted session; thread-safe request log and entry cursor."""

    def __init__(self, script: ModelScript) -> None:
        self.script = script
        self._entries = list(script.entries)
        self._cursor = 0
        self._response_counter = 0
        self._lock = threading.Lock()
        self.requests: list[RecordedRequest] = []
        self._http: Optional[ThreadingHTTPServer] = None
        self._http_thread: Optional[threading.Thread] = None

    # -- core dispatch ---------------------------------------------------

    def handle(self, wire: dict, transport: str, api_key: str) -> ServedResponse:
        with self._lock:
            self.requests.append(RecordedRequest(transport=transport, wire=wire, api_key=api_key))
            while self._cursor < len(self._entries):
                entry = self._entries[self._cursor]
                if isinstance(entry, Fault):
                    if entry.kind is FaultKind.EMPTY_CHANNEL_RESPONSE and transport != "channel":
                        # Fault targets the channel; a fallback request on
                        # the event stream skips past it to the real turn.
                        self._cursor += 1
                        continue
                    self._cursor += 1
                    return _fault_response(entry)
                self._cursor += 1
                return self._serve_turn(entry, wire)
            return ServedResponse(
                status=500,
                error_body=_error_body("server_error", "script_exhausted", "no scripted turns remain"),
            )

    def _serve_turn(self, turn: ScriptTurn, wire: dict) -> ServedResponse:
        self._response_counter += 1
        response_id = f"resp-{self._response_counter}"
        events: list[StreamEvent] = []
        output_text_len = 0
        if turn.is_final:
            item = {
                "content": turn.final,
                "id": f"{response_id}-item-0",
                "type": "assistant_text",
            }
            output_text_len += len(turn.final or "")
            events.append(StreamEvent("response.output_item", canonical_json({"item": item})))
        else:
            for i, call in enumerate(turn.tool_calls):
                item = {
                    "call_id": call.call_id,
                    "content": canonical_json(call.arguments),
                    "id": f"{response_id}-item-{i}",
                    "tool_name": call.name,
                    "type": "tool_call",
                }
                output_text_len += len(item["content"])
                events.append(StreamEvent("response.output_item", canonical_json({"item": item})))
        input_tokens = sum(
            estimate_tokens(str(item.get("content", ""))) for item in wire.get("input", [])
        )
        completed = {
            "response_id": response_id,
            "usage": {
                "input_tokens": input_tokens,
                "output_tokens": estimate_tokens("x" * output_text_len),
            },
        }
        events.append(StreamEvent("response.completed", canonical_json(completed)))
        return ServedResponse(events=tuple(events))

    # -- HTTP event-stream endpoint ---------------------------------------

    def start_http(self) -> str:
        if self._http is not None:
            return self.base_url
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802
                if self.path != "/v1/responses":
                    self.send_error(404)
                    return
                length = int(self.headers.get("Content-Length", "0"))
                body = self.rfile.read(length)
                try:
                    wire = json.loads(body)
                except json.JSONDecodeError:
                    self.send_error(400)
                    return
                auth = self.headers.get("Authorization", "")
                api_key = auth.removeprefix("Bearer ").strip()
                served = server.handle(wire, "sse", api_key)
                if served.is_error:
                    payload = served.error_body.encode("utf-8")
                    self.send_response(served.status)
                    for name, value in served.headers.items():
                        self.send_header(name, value)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                    return
                frames = [render_sse([event]) for event in served.events]
                total = sum(len(f) for f in frames)
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Content-Length", str(total))
                self.end_headers()
                for frame in frames:
                    self.wfile.write(frame)
                    self.wfile.flush()

            def log_message(self, *args) -> None:  # silence test output
                pass

        self._http = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._http_thread = threading.Thread(target=self._http.serve_forever, daemon=True)
        self._http_thread.start()
        return self.base_url

    @property
    def base_url(self) -> str:
        if self._http is None:
            raise RuntimeError("HTTP endpoint not started")
        host, port = self._http.server_address[:2]
        return f"http://{host}:{port}"

    def close(self) -> None:
        if self._http is not None:
            self._http.shutdown()
            self._http.server_close()
            self._http = None

    # -- assertions helpers -------------------------------------------------

    def tool_kinds_seen(self) -> set[str]:
        kinds: set[str] = set()
        for request in self.requests:
            for tool in request.wire.get("tools", []):
                kinds.add(tool.get("type", ""))
        return kinds


class ChannelTransport:
    """In-process persistent bidirectional channel to the mock server."""

    name = "channel"

    def __init__(self, server: MockModelServer) -> None:
        self.server = server

    def request(self, request: ModelRequest, api_key: str) -> list[StreamEvent]:
        served = self.server.handle(json.loads(request.to_json()), "channel", api_key)
        if served.is_error:
            raise classify_error(served.status, served.error_body or "", served.headers.get("Retry-After"))
        return list(served.events)


def serve(script: ModelScript, transports: Sequence[str] = ("channel", "sse")) -> MockModelServer:
    """Start a mock endpoint for the given script; caller owns close()."""
    server = MockModelServer(script)
    if "sse" in transports:
        server.start_http()
    return server
