"""Command-line entry point: exec, flags, state, harness subcommands.

exec runs one non-interactive (or driver-attached) session and exits 0 on
completion, 2 when the turn cap was hit, 1 on failure, 64 on usage errors.
With --output jsonl every agent event is one JSON line on stdout, in
emission order. With --approval-io the process additionally writes approval
requests as JSON lines and reads decisions from stdin, which is how the
companion TUI drives a session.
"""

from __future__ import annotations

import json
import os
import sys
import threading
import uuid
from pathlib import Path
from typing import Optional

import click

from . import features
from .config import API_BASE_ENV, config_home, load_layered_config
from .execpolicy import LayerOrigin, PolicyParseError, merge_layers, parse_policy
from .harness import load_script, serve, run_eval, run_micro, write_reports
from .permissions import ApprovalDecision, ApprovalRequest, ApprovalVerdict, DecisionLayer
from .protocol import AgentEvent, EventKind
from .runner import RunContext, RunOutcome, SessionConfig, run
from .sandbox import MODE_NAMES
from .state import open_store
from .transport import Client, HttpSseTransport, KeyRing, RecoveryPolicy
from .harness.server import ChannelTransport

EXIT_COMPLETED = 0
EXIT_FAILED = 1
EXIT_MAX_TURNS = 2
EXIT_USAGE = 64

_OUTCOME_EXIT = {
    RunOutcome.COMPLETED: EXIT_COMPLETED,
    RunOutcome.FAILED: EXIT_FAILED,
    RunOutcome.MAX_TURNS_REACHED: EXIT_MAX_TURNS,
}


class UsageFailure(click.UsageError):
    pass


@click.group()
def cli() -> None:
    """Agent kernel: offline-testable coding-agent runtime."""


def _resolve_flags(enables: tuple[str, ...], disables: tuple[str, ...], parity: bool):
    if parity:
        return features.parity_mode()
    try:
        return features.resolve(env=dict(os.environ), runtime_enables=enables, runtime_disables=disables)
    except features.UnknownFlag as exc:
        raise UsageFailure(f"UnknownFlag: {exc}") from exc
    except features.ConflictingRuntime as exc:
        raise UsageFailure(str(exc)) from exc


def _build_client(model: str, config: dict, recovery: RecoveryPolicy) -> tuple[Client, Optional[object]]:
    """Returns (client, owned mock server or None)."""
    keys: tuple[str, ...]
    key_file = config.get("auth.key_file")
    if key_file and Path(key_file).is_file():
        keys = tuple(k.strip() for k in Path(key_file).read_text().splitlines() if k.strip())
    elif os.environ.get("CODEX_API_KEY"):
        keys = (os.environ["CODEX_API_KEY"],)
    else:
        keys = ("unset-key",)

    if model.startswith("mock:"):
        script_path = model.split(":", 1)[1]
        try:
            script = load_script(script_path)
        except (OSError, ValueError) as exc:
            raise UsageFailure(f"cannot load mock script {script_path}: {exc}") from exc
        server = serve(script, transports=("channel", "sse"))
        client = Client(
            channel=ChannelTransport(server),
            sse=HttpSseTransport(server.base_url),
            keyring=KeyRing(keys=keys),
            policy=recovery,
        )
        return client, server

    base = os.environ.get(API_BASE_ENV) or config.get("api.base")
    if not base:
        raise UsageFailure(f"no endpoint configured: set {API_BASE_ENV} or api.base")
    client = Client(
        channel=None,
        sse=HttpSseTransport(str(base)),
        keyring=KeyRing(keys=keys),
        policy=recovery,
        preferred="sse",
    )
    return client, None


def _load_policy(config: dict) -> "object":
    layers = []
    for origin, key in (
        (LayerOrigin.SYSTEM, "policy.system_path"),
        (LayerOrigin.ORGANIZATION, "policy.org_path"),
        (LayerOrigin.USER, "policy.user_path"),
    ):
        path = config.get(key)
        if not path:
            continue
        try:
            layers.append(parse_policy(Path(path).read_text(), origin))
        except OSError:
            continue
        except PolicyParseError as exc:
            raise UsageFailure(f"policy {path}: {exc}") from exc
    return merge_layers(layers)


class _StdioApprovalBridge:
    """Approval requests out as JSON lines, decisions in from stdin."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counter = 0

    def __call__(self, request: ApprovalRequest) -> ApprovalDecision:
        with self._lock:
            self._counter += 1
            request_id = self._counter
            sys.stdout.write(
                json.dumps(
                    {
                        "approval_request": {
                            "request_id": request_id,
                            "tool_name": request.tool_name,
                            "summary": request.summary,
                        }
                    }
                )
                + "\n"
            )
            sys.stdout.flush()
            line = sys.stdin.readline()
        if not line:
            return ApprovalDecision(ApprovalVerdict.DENY, DecisionLayer.INTERACTIVE, rationale="driver closed")
        try:
            payload = json.loads(line)
            verdict = ApprovalVerdict(payload["decision"])
        except (json.JSONDecodeError, KeyError, ValueError):
            return ApprovalDecision(ApprovalVerdict.DENY, DecisionLayer.INTERACTIVE, rationale="bad decision line")
        return ApprovalDecision(verdict, DecisionLayer.INTERACTIVE)


def _terminal_prompter(request: ApprovalRequest) -> ApprovalDecision:
    click.echo(f"approval needed: {request.summary}", err=True)
    choice = click.prompt("[a]llow / allow for [t]urn / [d]eny", default="d", err=True)
    verdict = {"a": ApprovalVerdict.ALLOW, "t": ApprovalVerdict.ALLOW_FOR_TURN}.get(
        choice.strip().lower(), ApprovalVerdict.DENY
    )
    return ApprovalDecision(verdict, DecisionLayer.INTERACTIVE)


def _render_text_event(event: AgentEvent) -> Optional[str]:
    if event.variant is EventKind.TURN_STARTED:
        return f"-- turn {event.turn_index}"
    if event.variant is EventKind.TOOL_CALL:
        return f"-> {event.payload.get('tool_name')} {json.dumps(event.payload.get('arguments', {}))}"
    if event.variant is EventKind.TOOL_RESULT:
        status = event.payload.get("status")
        first_line = str(event.payload.get("output", "")).splitlines()[:1]
        return f"<- {status} {first_line[0] if first_line else ''}".rstrip()
    if event.variant is EventKind.ERROR:
        return f"error: {event.payload.get('message')}"
    return None


@cli.command(name="exec")
@click.argument("prompt", required=False)
@click.option("--sandbox", "sandbox_name", type=click.Choice(sorted(MODE_NAMES)), default="read-only")
@click.option("--model", "-m", default=None, help="model id or mock:<script.jsonl>")
@click.option("--enable", "enables", multiple=True, metavar="FLAG")
@click.option("--disable", "disables", multiple=True, metavar="FLAG")
@click.option("--parity", is_flag=True, help="run with every enhancement flag off")
@click.option("--max-turns", type=int, default=None)
@click.option("--output", "output_mode", type=click.Choice(["text", "jsonl"]), default="text")
@click.option("--workspace", type=click.Path(file_okay=False), default=".")
@click.option("--interactive/--non-interactive", "interactive", default=False)
@click.option("--approval-io", is_flag=True, help="drive approvals over stdio JSON lines")
@click.option("--no-store", is_flag=True, help="skip session persistence")
def exec_cmd(
    prompt: Optional[str],
    sandbox_name: str,
    model: Optional[str],
    enables: tuple[str, ...],
    disables: tuple[str, ...],
    parity: bool,
    max_turns: Optional[int],
    output_mode: str,
    workspace: str,
    interactive: bool,
    approval_io: bool,
    no_store: bool,
) -> None:
    """Run one task non-interactively and stream agent events."""
    workspace_root = Path(workspace).resolve()
    config = load_layered_config(workspace_root)
    flags = _resolve_flags(enables, disables, parity)

    model_id = model or str(config.get("model.id", ""))
    if not model_id:
        raise UsageFailure("no model configured: pass --model or set model.id")
    if prompt is None:
        prompt = sys.stdin.read().strip()
    if not prompt:
        raise UsageFailure("empty prompt")

    mode = MODE_NAMES[sandbox_name]
    session = SessionConfig(
        model_id=model_id,
        max_turns=max_turns or int(config.get("limits.max_turns", 50)),
        sandbox_mode=mode,
        flags=flags,
        interactive=interactive or approval_io,
        full_access_opt_in=sandbox_name == "danger-full-access",
    )

    recovery = RecoveryPolicy(
        context_token_target=int(
            session.limits.compact_trigger_fraction * session.limits.model_context_tokens
        )
    )
    client, server = _build_client(model_id, config, recovery)

    store = None
    if not no_store:
        store = open_store(config_home() / "state.db")

    prompter = None
    if approval_io:
        prompter = _StdioApprovalBridge()
    elif interactive:
        prompter = _terminal_prompter

    def sink(event: AgentEvent) -> None:
        if output_mode == "jsonl":
            click.echo(event.to_json())
        else:
            line = _render_text_event(event)
            if line:
                click.echo(line)

    ctx = RunContext(
        workspace_root=workspace_root,
        policy=_load_policy(config),
        prompter=prompter,
        store=store,
        event_sink=sink,
        sandbox_backend=str(config.get("sandbox.backend", "checking")),
        session_id=f"session-{uuid.uuid4().hex[:12]}",
    )

    try:
        summary = run(session, prompt, client, ctx)
    finally:
        if server is not None:
            server.close()

    if summary.final_text and output_mode == "text":
        click.echo(summary.final_text)
    sys.exit(_OUTCOME_EXIT[summary.outcome])


@cli.group()
def flags() -> None:
    """Inspect the feature flag catalog."""


@flags.command(name="list")
@click.option("--json", "as_json", is_flag=True)
@click.option("--parity", is_flag=True)
@click.option("--enable", "enables", multiple=True, metavar="FLAG")
@click.option("--disable", "disables", multiple=True, metavar="FLAG")
def flags_list(as_json: bool, parity: bool, enables: tuple[str, ...], disables: tuple[str, ...]) -> None:
    resolved = _resolve_flags(enables, disables, parity)
    if as_json:
        payload = {
            name: {
                "value": resolved.enabled(name),
                "source": resolved.source(name).value,
                "category": definition.category,
                "default": definition.default,
                "description": definition.description,
            }
            for name, definition in features.CATALOG_BY_NAME.items()
        }
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
        return
    for definition in features.CATALOG:
        value = "on " if resolved.enabled(definition.name) else "off"
        source = resolved.source(definition.name).value
        click.echo(f"{definition.name:28} {value} ({source:7}) {definition.description}")


@cli.group()
def state() -> None:
    """Inspect persisted sessions."""


@state.command(name="export")
@click.argument("session_id")
@click.option("--store", "store_path", type=click.Path(dir_okay=False), default=None)
def state_export(session_id: str, store_path: Optional[str]) -> None:
    path = Path(store_path) if store_path else config_home() / "state.db"
    store = open_store(path)
    try:
        click.echo(store.export_session_jsonl(session_id), nl=False)
    except KeyError:
        raise UsageFailure(f"unknown session: {session_id}")
    finally:
        store.close()


@cli.group()
def harness() -> None:
    """Offline evaluation: scripted e2e tasks and micro-benchmarks."""


@harness.command(name="eval")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="reports")
@click.option("--repetitions", type=int, default=None)
@click.option("--parity", is_flag=True)
def harness_eval(out_dir: str, repetitions: Optional[int], parity: bool) -> None:
    flag_set = features.parity_mode() if parity else None
    report = run_eval(flags=flag_set, repetitions=repetitions)
    paths = write_reports(report, Path(out_dir), "eval_report")
    from .harness.report import eval_markdown

    click.echo(eval_markdown(report))
    click.echo("wrote: " + ", ".join(str(p) for p in paths))
    sys.exit(0 if report.all_passed else 1)


@harness.command(name="micro")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="reports")
def harness_micro(out_dir: str) -> None:
    report = run_micro()
    paths = write_reports(report, Path(out_dir), "micro_report")
    from .harness.report import micro_markdown

    click.echo(micro_markdown(report))
    click.echo("wrote: " + ", ".join(str(p) for p in paths))


@harness.command(name="serve")
@click.option("--script", "script_path", required=True, type=click.Path(exists=True, dir_okay=False))
def harness_serve(script_path: str) -> None:
    """Serve a scripted model over HTTP SSE until interrupted."""
    script = load_script(script_path)
    server = serve(script, transports=("channel", "sse"))
    click.echo(f"mock model endpoint at {server.base_url} (Ctrl-C to stop)")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
