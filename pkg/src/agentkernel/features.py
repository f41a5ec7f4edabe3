"""Feature flags: catalog, four-tier resolution, parity mode, hook sites.

Resolution precedence is runtime > env > build > defaults. Env accepts both
CODEX_ENABLE_<NAME>=1/0 and the aggregate CODEX_ENABLE_FLAG=NAME,NAME list.
Parity mode forces every flag off, including over runtime enables, so a
baseline run is exactly the baseline. Flag-gated code paths announce
themselves through EnhancementHooks; in parity the hook counter stays at
zero, which is what the parity tests assert.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional

ENV_PREFIX = "CODEX_ENABLE_"
ENV_AGGREGATE = "CODEX_ENABLE_FLAG"


class FlagSource(str, Enum):
    RUNTIME = "runtime"
    ENV = "env"
    BUILD = "build"
    DEFAULT = "default"


class UnknownFlag(KeyError):
    pass


class ConflictingRuntime(ValueError):
    pass


@dataclass(frozen=True)
class FlagDefinition:
    name: str
    default: bool
    category: str
    description: str


def _flag(name: str, default: bool, category: str, description: str) -> FlagDefinition:
    return FlagDefinition(name=name, default=default, category=category, description=description)


CATALOG: tuple[FlagDefinition, ...] = (
    _flag("MULTI_AGENT", True, "agents", "child agent spawning with forked conversation history"),
    _flag("MULTI_AGENT_V2", True, "agents", "revised child coordination with result aggregation"),
    _flag("MULTI_AGENT_ORCHESTRATION", True, "agents", "parallel child dispatch within the spawn safety bounds"),
    _flag("GUARDIAN", True, "guardian", "automated risk assessment before tool execution"),
    _flag("IDE_BRIDGE", False, "bridge", "editor integration bridge"),
    _flag("LSP_INTEGRATION", False, "bridge", "language-server-backed code intelligence"),
    _flag("MULTI_STRATEGY_COMPACTION", True, "compaction", "escalating micro/snip/full compaction pipeline"),
    _flag("FORKED_COMPACTION", False, "compaction", "branch-and-merge compaction for concurrent agents"),
    _flag("MEMORY_SYSTEM", True, "memory", "post-run memory extraction and retrieval"),
    _flag("TYPED_MEMORY", True, "memory", "structured memory records with typed schemas"),
    _flag("SEMANTIC_MEMORY", False, "memory", "embedding-based similarity search over memories"),
    _flag("AUTO_MEMORY", True, "memory", "memory extraction without an explicit request"),
    _flag("PERSISTENT_PLANS", True, "state", "goal and plan persistence across turns"),
    _flag("SYSTEM_REMINDERS", True, "state", "periodic system-message injection in long sessions"),
    _flag("DENIAL_REPLAY", True, "state", "re-attempt denied actions with adjusted parameters"),
    _flag("FILE_TOOLS", True, "tools", "file read/write/edit tools beyond the base shell"),
    _flag("FILE_EDIT", True, "tools", "structured file editing with conflict detection"),
    _flag("WEB_FETCH", False, "tools", "HTTP fetching and page extraction"),
    _flag("NOTEBOOK_EDIT", False, "tools", "notebook cell manipulation"),
    _flag("WORKTREE_TOOLS", False, "tools", "git worktree management"),
    _flag("SKILLS", True, "productivity", "loadable skill definitions for recurring workflows"),
    _flag("CRON_TOOL", False, "productivity", "scheduled task creation and management"),
    _flag("VOICE_MODE", False, "productivity", "voice input and output"),
    _flag("COST_TRACKING", True, "resilience", "per-session and per-turn cost accounting"),
    _flag("APP_STATE", True, "resilience", "application-level state checkpointing"),
    _flag("STARTUP_PREFETCH", True, "resilience", "parallel prefetch of config and credentials"),
)

CATALOG_BY_NAME: dict[str, FlagDefinition] = {f.name: f for f in CATALOG}


@dataclass(frozen=True)
class FlagSet:
    resolved: Mapping[str, tuple[bool, FlagSource]]

    def enabled(self, name: str) -> bool:
        try:
            return self.resolved[name][0]
        except KeyError:
            raise UnknownFlag(name) from None

    def source(self, name: str) -> FlagSource:
        try:
            return self.resolved[name][1]
        except KeyError:
            raise UnknownFlag(name) from None

    def as_dict(self) -> dict[str, bool]:
        return {name: value for name, (value, _source) in self.resolved.items()}


def _env_values(env: Mapping[str, str], catalog: Mapping[str, FlagDefinition]) -> dict[str, bool]:
    values: dict[str, bool] = {}
    aggregate = env.get(ENV_AGGREGATE, "")
    for raw in aggregate.split(","):
        name = raw.strip().upper()
        if name and name in catalog:
            values[name] = True
    for name in catalog:
        raw = env.get(ENV_PREFIX + name)
        if raw is None:
            continue
        values[name] = raw.strip() not in ("0", "false", "False", "")
    return values


def resolve(
    build_overrides: Optional[Mapping[str, bool]] = None,
    env: Optional[Mapping[str, str]] = None,
    runtime_enables: Iterable[str] = (),
    runtime_disables: Iterable[str] = (),
    catalog: Optional[Mapping[str, FlagDefinition]] = None,
) -> FlagSet:
    catalog = dict(catalog or CATALOG_BY_NAME)
    enables = {name.upper() for name in runtime_enables}
    disables = {name.upper() for name in runtime_disables}
    conflict = enables & disables
    if conflict:
        raise ConflictingRuntime(f"flags both enabled and disabled: {sorted(conflict)}")
    for name in enables | disables:
        if name not in catalog:
            raise UnknownFlag(name)
    for name in build_overrides or {}:
        if name not in catalog:
            raise UnknownFlag(name)

    env_values = _env_values(env or {}, catalog)
    resolved: dict[str, tuple[bool, FlagSource]] = {}
    for name, definition in catalog.items():
        if name in enables:
            resolved[name] = (True, FlagSource.RUNTIME)
        elif name in disables:
            resolved[name] = (False, FlagSource.RUNTIME)
        elif name in env_values:
            resolved[name] = (env_values[name], FlagSource.ENV)
        elif build_overrides and name in build_overrides:
            resolved[name] = (build_overrides[name], FlagSource.BUILD)
        else:
            resolved[name] = (definition.default, FlagSource.DEFAULT)
    return FlagSet(resolved=resolved)


def parity_mode(catalog: Optional[Mapping[str, FlagDefinition]] = None) -> FlagSet:
    """All flags off, unconditionally. Strictness beats flexibility here:
    even runtime enables do not survive parity."""
    catalog = dict(catalog or CATALOG_BY_NAME)
    return FlagSet(resolved={name: (False, FlagSource.RUNTIME) for name in catalog})


def default_flags() -> FlagSet:
    return resolve()


class EnhancementHooks:
    """Named call sites for flag-gated paths.

    fire_if increments only when the flag is on, so a parity run keeps the
    counter at zero even though the core pipeline still executes.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.counts: dict[str, int] = {}

    def fire_if(self, flags: FlagSet, name: str) -> bool:
        if not flags.enabled(name):
            return False
        with self._lock:
            self.counts[name] = self.counts.get(name, 0) + 1
        return True

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self.counts.values())
