"""Declarative execution policy: parse, layer-merge, evaluate.

Rules live in a line-oriented text format, one rule per line:

    allow prefix "git status"
    deny  net    "evil.example.com" 443
    allow exec   "/usr/bin/rg"

Layers come from system, organization, and user policy files. Merged
evaluation walks user rules first, then organization, then system; the
first matching rule wins and no match means prompt.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence


class Verdict(str, Enum):
    ALLOW = "allow"
    DENY = "deny"
    PROMPT = "prompt"


class LayerOrigin(str, Enum):
    SYSTEM = "system"
    ORGANIZATION = "organization"
    USER = "user"


# user strongest; evaluation order is the reverse of precedence rank
_EVALUATION_ORDER = (LayerOrigin.USER, LayerOrigin.ORGANIZATION, LayerOrigin.SYSTEM)


class PolicyParseError(ValueError):
    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateOrigin(ValueError):
    pass


@dataclass(frozen=True)
class CommandPrefix:
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("command prefix must be non-empty")


@dataclass(frozen=True)
class NetworkHost:
    host: str
    port: Optional[int] = None

    def __post_init__(self) -> None:
        if self.port is not None and not (1 <= self.port <= 65535):
            raise ValueError("port out of range")


@dataclass(frozen=True)
class Executable:
    path: str


@dataclass(frozen=True)
class PolicyRule:
    matcher: CommandPrefix | NetworkHost | Executable
    verdict: Verdict
    rule_id: str


@dataclass(frozen=True)
class PolicyLayer:
    origin: LayerOrigin
    rules: tuple[PolicyRule, ...]


@dataclass(frozen=True)
class PolicyDecision:
    verdict: Verdict
    matched_rule: Optional[str] = None
    origin: Optional[LayerOrigin] = None


DEFAULT_DECISION = PolicyDecision(verdict=Verdict.PROMPT)


def parse_policy(document: str, origin: LayerOrigin = LayerOrigin.USER) -> PolicyLayer:
    rules: list[PolicyRule] = []
    for line_no, raw in enumerate(document.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            words = shlex.split(line, comments=True)
        except ValueError as exc:
            raise PolicyParseError(line_no, f"bad quoting: {exc}") from exc
        if len(words) < 3:
            raise PolicyParseError(line_no, "expected: <verdict> <matcher> <argument> [port]")
        verdict_word, matcher_word, argument = words[0], words[1], words[2]
        try:
            verdict = Verdict(verdict_word)
        except ValueError:
            raise PolicyParseError(line_no, f"unknown verdict {verdict_word!r}") from None
        rule_id = f"{origin.value}:{line_no}"
        if matcher_word == "prefix":
            tokens = tuple(argument.split())
            if not tokens:
                raise PolicyParseError(line_no, "empty command prefix")
            if len(words) > 3:
                raise PolicyParseError(line_no, "prefix takes a single quoted argument")
            rules.append(PolicyRule(CommandPrefix(tokens), verdict, rule_id))
        elif matcher_word == "net":
            port: Optional[int] = None
            if len(words) == 4:
                if not words[3].isdigit():
                    raise PolicyParseError(line_no, f"bad port {words[3]!r}")
                port = int(words[3])
                if not (1 <= port <= 65535):
                    raise PolicyParseError(line_no, f"port {port} out of range")
            elif len(words) > 4:
                raise PolicyParseError(line_no, "net takes host and optional port")
            rules.append(PolicyRule(NetworkHost(argument, port), verdict, rule_id))
        elif matcher_word == "exec":
            if len(words) > 3:
                raise PolicyParseError(line_no, "exec takes a single path")
            rules.append(PolicyRule(Executable(argument), verdict, rule_id))
        else:
            raise PolicyParseError(line_no, f"unknown matcher {matcher_word!r}")
    return PolicyLayer(origin=origin, rules=tuple(rules))


@dataclass(frozen=True)
class MergedPolicy:
    """Rules flattened into final evaluation order (user, org, system)."""

    ordered_rules: tuple[tuple[LayerOrigin, PolicyRule], ...]

    @property
    def rule_count(self) -> int:
        return len(self.ordered_rules)


def merge_layers(layers: Sequence[PolicyLayer]) -> MergedPolicy:
    by_origin: dict[LayerOrigin, PolicyLayer] = {}
    for layer in layers:
        if layer.origin in by_origin:
            raise DuplicateOrigin(f"duplicate layer for origin {layer.origin.value}")
        by_origin[layer.origin] = layer
    ordered: list[tuple[LayerOrigin, PolicyRule]] = []
    for origin in _EVALUATION_ORDER:
        layer = by_origin.get(origin)
        if layer is None:
            continue
        ordered.extend((origin, rule) for rule in layer.rules)
    return MergedPolicy(ordered_rules=tuple(ordered))


@dataclass(frozen=True)
class InvocationFacts:
    """What a tool invocation exposes to the policy engine."""

    argv: tuple[str, ...] = ()
    network_host: Optional[str] = None
    network_port: Optional[int] = None
    executable: Optional[str] = None


def _rule_matches(rule: PolicyRule, facts: InvocationFacts) -> bool:
    matcher = rule.matcher
    if isinstance(matcher, CommandPrefix):
        n = len(matcher.tokens)
        return len(facts.argv) >= n and tuple(facts.argv[:n]) == matcher.tokens
    if isinstance(matcher, NetworkHost):
        if facts.network_host is None:
            return False
        if matcher.host.lower() != facts.network_host.lower():
            return False
        return matcher.port is None or matcher.port == facts.network_port
    if isinstance(matcher, Executable):
        return facts.executable is not None and facts.executable == matcher.path
    return False


def evaluate(policy: MergedPolicy, facts: InvocationFacts) -> PolicyDecision:
    """First matching rule in evaluation order wins; default is prompt."""
    for origin, rule in policy.ordered_rules:
        if _rule_matches(rule, facts):
            return PolicyDecision(verdict=rule.verdict, matched_rule=rule.rule_id, origin=origin)
    return DEFAULT_DECISION
