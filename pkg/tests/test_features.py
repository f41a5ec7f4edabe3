"""Flag catalog, four-tier precedence, parity mode, and hook counting."""

from __future__ import annotations

import itertools

import pytest

from agentkernel.features import (
    CATALOG,
    CATALOG_BY_NAME,
    ConflictingRuntime,
    EnhancementHooks,
    FlagSource,
    UnknownFlag,
    default_flags,
    parity_mode,
    resolve,
)

EXPECTED_DEFAULTS = {
    "MULTI_AGENT": True,
    "MULTI_AGENT_V2": True,
    "MULTI_AGENT_ORCHESTRATION": True,
    "GUARDIAN": True,
    "IDE_BRIDGE": False,
    "LSP_INTEGRATION": False,
    "MULTI_STRATEGY_COMPACTION": True,
    "FORKED_COMPACTION": False,
    "MEMORY_SYSTEM": True,
    "TYPED_MEMORY": True,
    "SEMANTIC_MEMORY": False,
    "AUTO_MEMORY": True,
    "PERSISTENT_PLANS": True,
    "SYSTEM_REMINDERS": True,
    "DENIAL_REPLAY": True,
    "FILE_TOOLS": True,
    "FILE_EDIT": True,
    "WEB_FETCH": False,
    "NOTEBOOK_EDIT": False,
    "WORKTREE_TOOLS": False,
    "SKILLS": True,
    "CRON_TOOL": False,
    "VOICE_MODE": False,
    "COST_TRACKING": True,
    "APP_STATE": True,
    "STARTUP_PREFETCH": True,
}


class TestCatalog:
    def test_twenty_six_flags(self):
        assert len(CATALOG) == 26
        assert len(CATALOG_BY_NAME) == 26

    def test_defaults_match_catalog(self):
        assert {f.name: f.default for f in CATALOG} == EXPECTED_DEFAULTS

    def test_names_unique_and_uppercase(self):
        names = [f.name for f in CATALOG]
        assert len(set(names)) == len(names)
        assert all(name == name.upper() for name in names)


class TestResolve:
    def test_no_inputs_all_defaults(self):
        flags = resolve()
        assert flags.enabled("GUARDIAN") is True
        assert flags.enabled("VOICE_MODE") is False
        assert all(flags.source(name) is FlagSource.DEFAULT for name in CATALOG_BY_NAME)

    def test_runtime_beats_env(self):
        flags = resolve(env={"CODEX_ENABLE_VOICE_MODE": "1"}, runtime_disables=["VOICE_MODE"])
        assert flags.enabled("VOICE_MODE") is False
        assert flags.source("VOICE_MODE") is FlagSource.RUNTIME

    def test_env_beats_build(self):
        flags = resolve(build_overrides={"VOICE_MODE": False}, env={"CODEX_ENABLE_VOICE_MODE": "1"})
        assert flags.enabled("VOICE_MODE") is True
        assert flags.source("VOICE_MODE") is FlagSource.ENV

    def test_aggregate_env_variable(self):
        flags = resolve(env={"CODEX_ENABLE_FLAG": "VOICE_MODE, CRON_TOOL"})
        assert flags.enabled("VOICE_MODE") and flags.enabled("CRON_TOOL")
        assert flags.source("VOICE_MODE") is FlagSource.ENV

    def test_env_zero_disables(self):
        flags = resolve(env={"CODEX_ENABLE_GUARDIAN": "0"})
        assert flags.enabled("GUARDIAN") is False

    def test_unknown_runtime_flag(self):
        with pytest.raises(UnknownFlag):
            resolve(runtime_enables=["FOO"])

    def test_unknown_build_flag(self):
        with pytest.raises(UnknownFlag):
            resolve(build_overrides={"FOO": True})

    def test_conflicting_runtime(self):
        with pytest.raises(ConflictingRuntime):
            resolve(runtime_enables=["VOICE_MODE"], runtime_disables=["VOICE_MODE"])

    def test_unknown_env_names_ignored(self):
        flags = resolve(env={"CODEX_ENABLE_NOT_A_FLAG": "1", "CODEX_ENABLE_FLAG": "ALSO_FAKE"})
        assert flags.enabled("GUARDIAN") is True  # untouched defaults


class TestPrecedenceExhaustive:
    def test_all_combinations_per_flag(self):
        """For every flag, every combination of source presence and value:
        highest-precedence present source wins."""
        presence_options = [None, True, False]  # absent / present-true / present-false
        for definition in CATALOG:
            name = definition.name
            for build_v, env_v, runtime_v in itertools.product(presence_options, repeat=3):
                build = {name: build_v} if build_v is not None else {}
                env = {f"CODEX_ENABLE_{name}": "1" if env_v else "0"} if env_v is not None else {}
                enables = [name] if runtime_v is True else []
                disables = [name] if runtime_v is False else []
                flags = resolve(
                    build_overrides=build,
                    env=env,
                    runtime_enables=enables,
                    runtime_disables=disables,
                )
                if runtime_v is not None:
                    expected, source = runtime_v, FlagSource.RUNTIME
                elif env_v is not None:
                    expected, source = env_v, FlagSource.ENV
                elif build_v is not None:
                    expected, source = build_v, FlagSource.BUILD
                else:
                    expected, source = definition.default, FlagSource.DEFAULT
                assert flags.enabled(name) is expected, (name, build_v, env_v, runtime_v)
                assert flags.source(name) is source


class TestParity:
    def test_parity_all_off(self):
        flags = parity_mode()
        assert sum(flags.enabled(name) for name in CATALOG_BY_NAME) == 0
        assert len(flags.resolved) == 26

    def test_parity_is_hard_override(self):
        # parity ignores any would-be enables by construction
        flags = parity_mode()
        assert flags.enabled("GUARDIAN") is False
        assert flags.source("GUARDIAN") is FlagSource.RUNTIME

    def test_parity_idempotent(self):
        once = parity_mode()
        twice = parity_mode()
        assert once.as_dict() == twice.as_dict()


class TestHooks:
    def test_fire_only_when_enabled(self):
        hooks = EnhancementHooks()
        on = default_flags()
        off = parity_mode()
        assert hooks.fire_if(on, "GUARDIAN") is True
        assert hooks.fire_if(off, "GUARDIAN") is False
        assert hooks.counts == {"GUARDIAN": 1}
        assert hooks.total == 1

    def test_unknown_hook_flag_raises(self):
        hooks = EnhancementHooks()
        with pytest.raises(UnknownFlag):
            hooks.fire_if(default_flags(), "NOT_REAL")

    def test_parity_keeps_counter_zero(self):
        hooks = EnhancementHooks()
        flags = parity_mode()
        for name in CATALOG_BY_NAME:
            hooks.fire_if(flags, name)
        assert hooks.total == 0
