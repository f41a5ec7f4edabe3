"""Error classification and the request-rewriting recovery layer."""

from __future__ import annotations

import json

import pytest

from agentkernel.protocol import InputItem, ItemKind, StreamEvent, canonical_json
from agentkernel.transport import (
    BadRequestSubtype,
    Client,
    EmptyResponse,
    ErrorClass,
    KeyRing,
    ModelRequest,
    RecoveryExhausted,
    RecoveryPolicy,
    ToolDeclaration,
    TransportError,
    assemble_response,
    classify_error,
    trim_for_context,
)


def _body(code: str, param: str | None = None, message: str = "") -> str:
    err: dict = {"type": "invalid_request_error", "code": code, "message": message}
    if param:
        err["param"] = param
    return json.dumps({"error": err})


def item(kind: ItemKind, i: int, content: str = "text") -> InputItem:
    return InputItem(kind=kind, id=f"i{i}", content=content)


def base_request(n_items: int = 4, tools: int = 1) -> ModelRequest:
    items = [item(ItemKind.SYSTEM, 0, "system prompt")]
    items += [item(ItemKind.ASSISTANT_TEXT, i + 1, f"filler {i}" * 10) for i in range(n_items - 2)]
    items.append(item(ItemKind.USER_TEXT, n_items - 1, "latest ask"))
    return ModelRequest(
        model_id="mock",
        input=tuple(items),
        tools=tuple(ToolDeclaration(name=f"tool{i}") for i in range(tools)),
        previous_response_id="resp-prev",
    )


class TestClassifyError:
    def test_unsupported_previous_response_id(self):
        err = classify_error(400, _body("unsupported_parameter", "previous_response_id"))
        assert err.classification is ErrorClass.BAD_REQUEST
        assert err.subtype is BadRequestSubtype.UNSUPPORTED_PREVIOUS_RESPONSE_ID

    def test_invalid_input_item_with_index(self):
        err = classify_error(400, _body("invalid_value", "input[3]"))
        assert err.subtype is BadRequestSubtype.INVALID_INPUT_ITEM
        assert err.input_index == 3

    def test_unsupported_tool_type(self):
        err = classify_error(400, _body("unsupported_tool_type", "tools[1].type"))
        assert err.subtype is BadRequestSubtype.UNSUPPORTED_TOOL_TYPE
        assert err.tool_index == 1

    def test_context_overflow(self):
        err = classify_error(400, _body("context_overflow", None, "context window exceeded"))
        assert err.subtype is BadRequestSubtype.CONTEXT_OVERFLOW

    def test_unknown_400_has_no_subtype(self):
        err = classify_error(400, "not even json")
        assert err.classification is ErrorClass.BAD_REQUEST
        assert err.subtype is None
        assert err.raw_body == "not even json"

    def test_rate_limited_with_retry_after(self):
        err = classify_error(429, json.dumps({"error": {"code": "rate_limit_exceeded"}}), "2")
        assert err.classification is ErrorClass.RATE_LIMITED
        assert err.retry_after_seconds == 2.0

    def test_quota_exhausted(self):
        err = classify_error(429, json.dumps({"error": {"code": "insufficient_quota"}}))
        assert err.classification is ErrorClass.QUOTA_EXHAUSTED

    def test_server_error(self):
        assert classify_error(500, "{}").classification is ErrorClass.SERVER

    def test_network_class_for_other_statuses(self):
        assert classify_error(0, "connection reset").classification is ErrorClass.NETWORK


class TestWireInvariants:
    def test_tool_declarations_must_be_function_kind(self):
        with pytest.raises(ValueError):
            ModelRequest(
                model_id="m",
                input=(item(ItemKind.USER_TEXT, 0),),
                tools=(ToolDeclaration(name="shell", kind="local_shell"),),
            )

    def test_wire_body_carries_function_kind(self):
        wire = base_request().to_wire()
        assert all(t["type"] == "function" for t in wire["tools"])

    def test_zero_output_items_is_empty_response(self):
        with pytest.raises(EmptyResponse):
            assemble_response([])

    def test_malformed_frame_is_network_classified_with_body(self):
        bad = [StreamEvent("response.output_item", "{not json at all")]
        client, _channel, _sse, _ = make_client([bad])
        with pytest.raises(TransportError) as err:
            client.send(base_request())
        assert err.value.classification is ErrorClass.NETWORK
        assert "{not json at all" in err.value.raw_body

    def test_truncated_sse_stream_is_network_classified(self):
        import threading
        from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

        from agentkernel.transport import HttpSseTransport

        class Truncating(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802
                body = b"event: response.output_item\ndata: {\"item\""  # cut mid-record
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        server = ThreadingHTTPServer(("127.0.0.1", 0), Truncating)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address[:2]
            transport = HttpSseTransport(f"http://{host}:{port}")
            with pytest.raises(TransportError) as err:
                transport.request(base_request(), "k")
            assert err.value.classification is ErrorClass.NETWORK
            assert '{"item"' in err.value.raw_body
        finally:
            server.shutdown()
            server.server_close()

    def test_assemble_text_and_tool_calls(self):
        events = [
            StreamEvent(
                "response.output_item",
                canonical_json({"item": {"content": "hi", "id": "a", "type": "assistant_text"}}),
            ),
            StreamEvent(
                "response.output_item",
                canonical_json(
                    {
                        "item": {
                            "call_id": "c1",
                            "content": canonical_json({"command": "ls"}),
                            "id": "b",
                            "tool_name": "shell",
                            "type": "tool_call",
                        }
                    }
                ),
            ),
            StreamEvent("response.completed", canonical_json({"response_id": "r1", "usage": {"input_tokens": 3, "output_tokens": 5}})),
        ]
        response = assemble_response(events)
        assert response.text == "hi"
        assert response.response_id == "r1"
        (call,) = response.tool_calls
        assert call.name == "shell" and call.arguments == {"command": "ls"}


class ScriptedTransport:
    """Feeds a queue of outcomes: TransportError to raise, list of events to
    return, or a ModelResponse-shaped event list."""

    def __init__(self, name: str, outcomes: list) -> None:
        self.name = name
        self.outcomes = list(outcomes)
        self.requests: list[ModelRequest] = []
        self.keys_seen: list[str] = []

    def request(self, request: ModelRequest, api_key: str):
        self.requests.append(request)
        self.keys_seen.append(api_key)
        if not self.outcomes:
            raise TransportError(ErrorClass.SERVER, 500, "script exhausted")
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def ok_events(text: str = "done") -> list[StreamEvent]:
    return [
        StreamEvent(
            "response.output_item",
            canonical_json({"item": {"content": text, "id": "o1", "type": "assistant_text"}}),
        ),
        StreamEvent("response.completed", canonical_json({"response_id": "r", "usage": {}})),
    ]


def make_client(channel_outcomes=None, sse_outcomes=None, keys=("k1",), policy=None, sleeper=None):
    sleeps: list[float] = []
    channel = ScriptedTransport("channel", channel_outcomes) if channel_outcomes is not None else None
    sse = ScriptedTransport("sse", sse_outcomes) if sse_outcomes is not None else None
    client = Client(
        channel=channel,
        sse=sse,
        keyring=KeyRing(keys=tuple(keys)),
        policy=policy or RecoveryPolicy(),
        sleeper=sleeper or sleeps.append,
    )
    return client, channel, sse, sleeps


class TestRecoveryRewrites:
    def test_previous_response_id_stripped_and_retried(self):
        error = classify_error(400, _body("unsupported_parameter", "previous_response_id"))
        client, channel, _sse, _ = make_client([error, ok_events()])
        response = client.send_with_recovery(base_request())
        assert response.text == "done"
        assert len(channel.requests) == 2
        assert channel.requests[0].previous_response_id == "resp-prev"
        assert channel.requests[1].previous_response_id is None
        assert "previous_response_id" not in channel.requests[1].to_wire()

    def test_invalid_input_item_removed_by_index(self):
        error = classify_error(400, _body("invalid_value", "input[2]"))
        client, channel, _sse, _ = make_client([error, ok_events()])
        request = base_request(n_items=5)
        removed_item = request.input[2]
        response = client.send_with_recovery(request)
        assert response.text == "done"
        second = channel.requests[1]
        assert len(second.input) == len(request.input) - 1
        assert removed_item not in second.input

    def test_unsupported_tool_type_declaration_dropped(self):
        error = classify_error(400, _body("unsupported_tool_type", "tools[0].type"))
        client, channel, _sse, _ = make_client([error, ok_events()])
        request = base_request(tools=2)
        response = client.send_with_recovery(request)
        assert response.text == "done"
        second = channel.requests[1]
        assert len(second.tools) == 1
        assert second.tools[0].name == "tool1"

    def test_context_overflow_trims_oldest_unprotected(self):
        error = classify_error(400, _body("context_overflow", None, "context window exceeded"))
        client, channel, _sse, _ = make_client(
            [error, ok_events()], policy=RecoveryPolicy(context_token_target=None)
        )
        request = base_request(n_items=6)
        response = client.send_with_recovery(request)
        assert response.text == "done"
        second = channel.requests[1]
        assert len(second.input) == len(request.input) - 1
        # first system and last user survive; the oldest filler went
        assert second.input[0].kind is ItemKind.SYSTEM
        assert second.input[-1].kind is ItemKind.USER_TEXT
        assert request.input[1] not in second.input

    def test_context_overflow_trims_to_token_target(self):
        error = classify_error(400, _body("context_overflow"))
        client, channel, _sse, _ = make_client(
            [error, ok_events()], policy=RecoveryPolicy(context_token_target=60)
        )
        request = base_request(n_items=8)
        client.send_with_recovery(request)
        second = channel.requests[1]
        total = sum((len(i.content) + 3) // 4 for i in second.input)
        assert total <= 60 or len(second.input) == 2  # protected items only

    def test_protected_items_never_trimmed(self):
        boundary = InputItem(kind=ItemKind.SUMMARY_BOUNDARY, id="b", content="marker")
        request = ModelRequest(
            model_id="m",
            input=(
                item(ItemKind.SYSTEM, 0, "sys"),
                boundary,
                item(ItemKind.ASSISTANT_TEXT, 1, "old filler"),
                item(ItemKind.USER_TEXT, 2, "ask"),
            ),
        )
        trimmed = trim_for_context(request, None)
        kinds = [i.kind for i in trimmed.input]
        assert ItemKind.SUMMARY_BOUNDARY in kinds
        assert kinds[0] is ItemKind.SYSTEM
        assert kinds[-1] is ItemKind.USER_TEXT
        assert len(trimmed.input) == 3


class TestRateLimitAndQuota:
    def test_retry_after_is_lower_bound(self):
        error = classify_error(429, "{}", "2")
        client, channel, _sse, sleeps = make_client([error, ok_events()])
        client.send_with_recovery(base_request())
        assert sleeps == [2.0]

    def test_backoff_non_decreasing_across_consecutive_429(self):
        errors = [classify_error(429, "{}", None) for _ in range(4)]
        client, channel, _sse, sleeps = make_client(errors + [ok_events()])
        client.send_with_recovery(base_request())
        assert sleeps == sorted(sleeps)
        assert len(sleeps) == 4

    def test_backoff_cap_respected(self):
        policy = RecoveryPolicy(max_retries=6, backoff_cap_seconds=4.0)
        errors = [classify_error(429, "{}", None) for _ in range(6)]
        client, _channel, _sse, sleeps = make_client(errors + [ok_events()], policy=policy)
        client.send_with_recovery(base_request())
        assert max(sleeps) <= 4.0

    def test_quota_rotates_key(self):
        quota = classify_error(429, json.dumps({"error": {"code": "insufficient_quota"}}))
        client, channel, _sse, _ = make_client([quota, ok_events()], keys=("k1", "k2"))
        client.send_with_recovery(base_request())
        assert channel.keys_seen == ["k1", "k2"]

    def test_all_keys_exhausted_terminal(self):
        quota = lambda: classify_error(429, json.dumps({"error": {"code": "insufficient_quota"}}))
        client, channel, _sse, _ = make_client([quota(), quota(), quota(), quota()], keys=("k1", "k2"))
        with pytest.raises(RecoveryExhausted):
            client.send_with_recovery(base_request())
        # circular rotation tried both keys before giving up
        assert channel.keys_seen[:3] == ["k1", "k2", "k1"]


class TestEmptyResponseFallback:
    def test_channel_empty_falls_back_to_sse_once(self):
        client, channel, sse, _ = make_client(channel_outcomes=[[]], sse_outcomes=[ok_events("via sse")])
        response = client.send_with_recovery(base_request())
        assert response.text == "via sse"
        assert len(channel.requests) == 1
        assert len(sse.requests) == 1
        assert any("empty" in a for a in client.attempt_log)
        assert any("sse: ok" in a for a in client.attempt_log)

    def test_both_empty_is_terminal(self):
        client, _channel, _sse, _ = make_client(channel_outcomes=[[]], sse_outcomes=[[]])
        with pytest.raises(RecoveryExhausted):
            client.send_with_recovery(base_request())

    def test_empty_without_sse_is_terminal(self):
        client, _channel, _sse, _ = make_client(channel_outcomes=[[]])
        with pytest.raises(RecoveryExhausted):
            client.send_with_recovery(base_request())


class TestTermination:
    def test_max_retries_bounds_attempts(self):
        errors = [classify_error(500, "{}") for _ in range(20)]
        client, channel, _sse, _ = make_client(errors, policy=RecoveryPolicy(max_retries=3))
        with pytest.raises(RecoveryExhausted) as err:
            client.send_with_recovery(base_request())
        assert len(channel.requests) == 4  # initial + 3 retries
        assert len(err.value.attempts) >= 4

    def test_rewrites_never_grow_request(self):
        import random

        rng = random.Random(99)
        subtype_bodies = [
            _body("unsupported_parameter", "previous_response_id"),
            _body("invalid_value", "input[1]"),
            _body("unsupported_tool_type", "tools[0].type"),
            _body("context_overflow"),
        ]
        for _ in range(40):
            n_faults = rng.randint(1, 4)
            outcomes = [classify_error(400, rng.choice(subtype_bodies)) for _ in range(n_faults)]
            outcomes.append(ok_events())
            client, channel, _sse, _ = make_client(outcomes, policy=RecoveryPolicy(max_retries=6))
            try:
                client.send_with_recovery(base_request(n_items=5, tools=2))
            except RecoveryExhausted:
                pass
            for earlier, later in zip(channel.requests, channel.requests[1:]):
                assert len(later.input) <= len(earlier.input)
                assert len(later.tools) <= len(earlier.tools)

    def test_attempt_trace_records_rewrites(self):
        error = classify_error(400, _body("invalid_value", "input[1]"))
        client, _channel, _sse, _ = make_client([error, ok_events()])
        client.send_with_recovery(base_request())
        assert any("removed input[1]" in a for a in client.attempt_log)
