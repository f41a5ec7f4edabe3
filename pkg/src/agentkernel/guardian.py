"""Automated command risk assessment.

A fast path classifies well-known safe and dangerous commands without any
model call; everything else goes to a model-backed review whose reply must
follow the ``SAFE|DANGEROUS|REVIEW: rationale`` grammar. Every failure mode
degrades to needs_review, never to safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

# Read-only inspection commands cleared without a model call. The first
# three come straight from operational experience; the rest round out the
# set and are configuration, not ground truth.
SAFE_COMMANDS: tuple[str, ...] = (
    "ls",
    "cat",
    "git status",
    "pwd",
    "echo",
    "head",
    "tail",
    "wc",
    "which",
    "git log",
)

DANGEROUS_PATTERNS: tuple[str, ...] = (
    "rm -rf /",
    "curl | bash",
    "chmod 777",
    "dd if=/dev/zero",
    "sudo rm",
)

GUARDIAN_PROMPT_TEMPLATE = (
    "Assess the risk of running this command in a developer workspace.\n"
    "Reply with one line: SAFE: <why> or DANGEROUS: <why> or REVIEW: <why>.\n"
    "Command: {command}"
)


class RiskLevel(str, Enum):
    SAFE = "safe"
    DANGEROUS = "dangerous"
    NEEDS_REVIEW = "needs_review"


class AssessmentSource(str, Enum):
    FAST_PATH = "fast_path"
    MODEL = "model"


class ModelUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class RiskAssessment:
    level: RiskLevel
    source: AssessmentSource
    rationale: str

    def __post_init__(self) -> None:
        if self.source is AssessmentSource.FAST_PATH and self.level is RiskLevel.NEEDS_REVIEW:
            raise ValueError("fast path never defers to review")


def render_command(argv: Sequence[str]) -> str:
    """Flatten argv for pattern matching; shell -c wrappers are unwrapped."""
    argv = list(argv)
    if len(argv) == 3 and argv[0] in ("sh", "bash", "zsh") and argv[1] in ("-c", "-lc"):
        return argv[2]
    return " ".join(argv)


def _contains_ordered(rendered: str, pattern: str) -> bool:
    # every whitespace piece of the pattern must appear, in order, so
    # "curl | bash" still catches "curl https://x | bash"
    position = 0
    for piece in pattern.split():
        found = rendered.find(piece, position)
        if found < 0:
            return False
        position = found + len(piece)
    return True


def fast_path_assess(argv: Sequence[str]) -> Optional[RiskAssessment]:
    """Classify via the pattern sets; None when no fast path applies."""
    if not argv:
        raise ValueError("argv must be non-empty")
    rendered = render_command(argv)
    for pattern in DANGEROUS_PATTERNS:
        if _contains_ordered(rendered, pattern):
            return RiskAssessment(
                level=RiskLevel.DANGEROUS,
                source=AssessmentSource.FAST_PATH,
                rationale=f"matches dangerous pattern {pattern!r}",
            )
    tokens = rendered.split()
    for entry in SAFE_COMMANDS:
        prefix = entry.split()
        if tokens[: len(prefix)] == prefix:
            return RiskAssessment(
                level=RiskLevel.SAFE,
                source=AssessmentSource.FAST_PATH,
                rationale=f"known safe command {entry!r}",
            )
    return None


def parse_review_reply(reply: str) -> RiskAssessment:
    head, sep, rationale = reply.strip().partition(":")
    levels = {"SAFE": RiskLevel.SAFE, "DANGEROUS": RiskLevel.DANGEROUS, "REVIEW": RiskLevel.NEEDS_REVIEW}
    level = levels.get(head.strip().upper())
    if level is None or not sep:
        return RiskAssessment(
            level=RiskLevel.NEEDS_REVIEW,
            source=AssessmentSource.MODEL,
            rationale=f"unparseable guardian reply: {reply[:120]!r}",
        )
    return RiskAssessment(level=level, source=AssessmentSource.MODEL, rationale=rationale.strip())


def full_review(argv: Sequence[str], model_client: Callable[[str], str]) -> RiskAssessment:
    """Model-backed review for commands with no fast path. Fail-closed."""
    prompt = GUARDIAN_PROMPT_TEMPLATE.format(command=render_command(argv))
    try:
        reply = model_client(prompt)
    except Exception:
        return RiskAssessment(
            level=RiskLevel.NEEDS_REVIEW,
            source=AssessmentSource.MODEL,
            rationale="guardian unavailable",
        )
    return parse_review_reply(reply)


def assess(argv: Sequence[str], model_client: Optional[Callable[[str], str]] = None) -> RiskAssessment:
    """Fast path first; the model is only consulted when it misses."""
    fast = fast_path_assess(argv)
    if fast is not None:
        return fast
    if model_client is None:
        return RiskAssessment(
            level=RiskLevel.NEEDS_REVIEW,
            source=AssessmentSource.MODEL,
            rationale="guardian unavailable",
        )
    return full_review(argv, model_client)
