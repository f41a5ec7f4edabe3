"""Unified approval pipeline behind a single can_use_tool entry point.

Three layers run in order: configured policy, guardian risk assessment
(flag-gated), interactive prompt. A terminal decision at any layer stops the
pipeline and is cached for the remainder of the turn under a normalized
invocation key, so semantically equal calls prompt at most once per turn.
Check-then-insert is atomic: two identical concurrent calls produce one
prompt and one shared decision.
"""

from __future__ import annotations

import threading
from concurrent.futures import Future
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from . import execpolicy, guardian
from .execpolicy import InvocationFacts, MergedPolicy, Verdict
from .protocol import canonical_json
from .sandbox import SandboxMode
from .tools.types import ParsedShell, ToolInvocation


class ApprovalVerdict(str, Enum):
    ALLOW = "allow"
    ALLOW_FOR_TURN = "allow_for_turn"
    DENY = "deny"


class DecisionLayer(str, Enum):
    CONFIG = "config"
    GUARDIAN = "guardian"
    INTERACTIVE = "interactive"


class PrompterUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class ApprovalCacheKey:
    tool_name: str
    normalized_argv: tuple[str, ...]
    sandbox_mode: SandboxMode


@dataclass(frozen=True)
class ApprovalRequest:
    tool_name: str
    normalized_key: ApprovalCacheKey
    summary: str


@dataclass(frozen=True)
class ApprovalDecision:
    verdict: ApprovalVerdict
    layer: DecisionLayer
    cached: bool = False
    rationale: str = ""

    def allowed(self) -> bool:
        return self.verdict in (ApprovalVerdict.ALLOW, ApprovalVerdict.ALLOW_FOR_TURN)

    def as_cached(self) -> "ApprovalDecision":
        return ApprovalDecision(self.verdict, self.layer, cached=True, rationale=self.rationale)


Prompter = Callable[[ApprovalRequest], ApprovalDecision]


def normalize_key(invocation: ToolInvocation, sandbox_mode: SandboxMode) -> ApprovalCacheKey:
    """Conservative normalization: exact argv after shell-word splitting.

    Non-shell tools key on canonical argument JSON; a cache miss is always
    safe, deeper equivalence is not attempted.
    """
    if isinstance(invocation.parsed, ParsedShell):
        argv = tuple(" ".join(token.split()) for token in invocation.parsed.argv)
    else:
        argv = (canonical_json(invocation.arguments),)
    return ApprovalCacheKey(tool_name=invocation.tool_name, normalized_argv=argv, sandbox_mode=sandbox_mode)


def summarize_invocation(invocation: ToolInvocation) -> str:
    if isinstance(invocation.parsed, ParsedShell):
        return "run: " + " ".join(invocation.parsed.argv)
    return f"{invocation.tool_name} {canonical_json(invocation.arguments)}"


@dataclass
class TurnContext:
    """Per-session approval state threaded through the runner."""

    policy: MergedPolicy
    sandbox_mode: SandboxMode
    interactive: bool
    prompter: Optional[Prompter] = None
    guardian_enabled: bool = True
    guardian_model: Optional[Callable[[str], str]] = None
    on_guardian_consulted: Callable[[], None] = lambda: None
    _cache: dict[ApprovalCacheKey, Future] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def reset_turn_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def cached_keys(self) -> int:
        with self._lock:
            return len(self._cache)


def reset_turn_cache(ctx: TurnContext) -> None:
    ctx.reset_turn_cache()


def _decide_uncached(ctx: TurnContext, invocation: ToolInvocation, request: ApprovalRequest) -> ApprovalDecision:
    # Layer 1: configured policy. allow/deny are terminal, prompt falls through.
    facts = _facts_for(invocation)
    policy_decision = execpolicy.evaluate(ctx.policy, facts)
    if policy_decision.verdict is Verdict.ALLOW:
        return ApprovalDecision(ApprovalVerdict.ALLOW, DecisionLayer.CONFIG, rationale=policy_decision.matched_rule or "")
    if policy_decision.verdict is Verdict.DENY:
        return ApprovalDecision(ApprovalVerdict.DENY, DecisionLayer.CONFIG, rationale=policy_decision.matched_rule or "")

    # Layer 2: guardian, only for shell commands and only when enabled.
    if ctx.guardian_enabled and isinstance(invocation.parsed, ParsedShell):
        ctx.on_guardian_consulted()
        assessment = guardian.assess(invocation.parsed.argv, ctx.guardian_model)
        if assessment.level is guardian.RiskLevel.SAFE:
            return ApprovalDecision(ApprovalVerdict.ALLOW, DecisionLayer.GUARDIAN, rationale=assessment.rationale)
        if assessment.level is guardian.RiskLevel.DANGEROUS and not ctx.interactive:
            return ApprovalDecision(ApprovalVerdict.DENY, DecisionLayer.GUARDIAN, rationale=assessment.rationale)
        # dangerous-but-interactive and needs_review both fall through to
        # the human.

    # Layer 3: interactive prompt, or fail-closed denial.
    if not ctx.interactive or ctx.prompter is None:
        return ApprovalDecision(
            ApprovalVerdict.DENY, DecisionLayer.INTERACTIVE, rationale="non-interactive session"
        )
    return ctx.prompter(request)


def _facts_for(invocation: ToolInvocation) -> InvocationFacts:
    if isinstance(invocation.parsed, ParsedShell):
        argv = invocation.parsed.argv
        executable = argv[0] if argv else None
        return InvocationFacts(argv=tuple(argv), executable=executable)
    host = invocation.arguments.get("host") if isinstance(invocation.arguments, dict) else None
    port = invocation.arguments.get("port") if isinstance(invocation.arguments, dict) else None
    return InvocationFacts(
        argv=(invocation.tool_name,),
        network_host=host if isinstance(host, str) else None,
        network_port=port if isinstance(port, int) else None,
    )


def can_use_tool(ctx: TurnContext, invocation: ToolInvocation) -> ApprovalDecision:
    key = normalize_key(invocation, ctx.sandbox_mode)
    request = ApprovalRequest(
        tool_name=invocation.tool_name,
        normalized_key=key,
        summary=summarize_invocation(invocation),
    )

    with ctx._lock:
        existing = ctx._cache.get(key)
        if existing is None:
            pending: Future = Future()
            ctx._cache[key] = pending
        else:
            pending = None  # type: ignore[assignment]
    if existing is not None:
        return existing.result().as_cached()

    try:
        decision = _decide_uncached(ctx, invocation, request)
    except BaseException as exc:
        with ctx._lock:
            ctx._cache.pop(key, None)
        pending.set_exception(exc)
        raise
    pending.set_result(decision)
    return decision
