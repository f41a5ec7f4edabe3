"""Sandbox mode resolution and the checking backend."""

from __future__ import annotations

import time

import pytest

from agentkernel.sandbox import (
    CheckingBackend,
    NoneBackend,
    OptInRequired,
    SandboxMode,
    SandboxTimeout,
    SpawnFailure,
    execute,
    make_backend,
    resolve_spec,
)


class TestResolveSpec:
    def test_read_only_default_shape(self, tmp_path):
        spec = resolve_spec(SandboxMode.READ_ONLY, tmp_path)
        assert spec.writable_roots == ()
        assert not spec.network_allowed

    def test_workspace_write_roots(self, tmp_path):
        scratch = tmp_path / "scratch"
        scratch.mkdir()
        spec = resolve_spec(SandboxMode.WORKSPACE_WRITE, tmp_path, scratch_dir=scratch)
        assert spec.writable_roots == (tmp_path, scratch)
        assert not spec.network_allowed

    def test_full_access_requires_opt_in(self, tmp_path):
        with pytest.raises(OptInRequired):
            resolve_spec(SandboxMode.FULL_ACCESS, tmp_path)
        spec = resolve_spec(SandboxMode.FULL_ACCESS, tmp_path, full_access_opt_in=True)
        assert spec.network_allowed

    def test_relative_root_rejected(self):
        with pytest.raises(ValueError):
            resolve_spec(SandboxMode.READ_ONLY, "relative/path")  # type: ignore[arg-type]

    def test_unknown_backend_name(self):
        with pytest.raises(ValueError):
            make_backend("seatbelt")


class TestCheckingBackend:
    def test_echo_read_only_clean(self, tmp_path):
        spec = resolve_spec(SandboxMode.READ_ONLY, tmp_path)
        outcome = execute(spec, ["echo", "hello"], tmp_path, backend=CheckingBackend())
        assert outcome.exit_code == 0
        assert outcome.stdout == "hello\n"
        assert outcome.violations == ()

    def test_write_inside_workspace_allowed(self, tmp_path):
        scratch = tmp_path / ".scratch"
        scratch.mkdir()
        spec = resolve_spec(SandboxMode.WORKSPACE_WRITE, tmp_path, scratch_dir=scratch)
        outcome = execute(spec, ["touch", str(tmp_path / "x")], tmp_path, backend=CheckingBackend())
        assert outcome.exit_code == 0
        assert outcome.violations == ()
        assert (tmp_path / "x").exists()

    def test_write_outside_workspace_flagged_and_blocked(self, tmp_path):
        workspace = tmp_path / "w"
        outside = tmp_path / "outside"
        workspace.mkdir()
        outside.mkdir()
        scratch = tmp_path / "s"
        scratch.mkdir()
        spec = resolve_spec(SandboxMode.WORKSPACE_WRITE, workspace, scratch_dir=scratch)
        outcome = execute(
            spec, ["touch", str(outside / "escape")], workspace, backend=CheckingBackend()
        )
        assert outcome.violations
        assert not (outside / "escape").exists()

    def test_workspace_write_under_read_only_detected_post_exec(self, tmp_path):
        spec = resolve_spec(SandboxMode.READ_ONLY, tmp_path)
        outcome = execute(
            spec, ["sh", "-c", "echo data > created.txt"], tmp_path, backend=CheckingBackend()
        )
        assert any("created.txt" in v for v in outcome.violations)

    def test_full_access_never_reports_violations(self, tmp_path):
        spec = resolve_spec(SandboxMode.FULL_ACCESS, tmp_path, full_access_opt_in=True)
        outcome = execute(spec, ["touch", str(tmp_path / "anything")], tmp_path, backend=CheckingBackend())
        assert outcome.violations == ()

    def test_mode_monotonicity(self, tmp_path):
        scratch = tmp_path / "s"
        scratch.mkdir()
        commands = [["echo", "ok"], ["cat", "/etc/hostname"], ["true"]]
        ro = resolve_spec(SandboxMode.READ_ONLY, tmp_path)
        ww = resolve_spec(SandboxMode.WORKSPACE_WRITE, tmp_path, scratch_dir=scratch)
        fa = resolve_spec(SandboxMode.FULL_ACCESS, tmp_path, full_access_opt_in=True)
        for argv in commands:
            ro_out = execute(ro, argv, tmp_path, backend=CheckingBackend())
            if ro_out.violations:
                continue
            for spec in (ww, fa):
                out = execute(spec, argv, tmp_path, backend=CheckingBackend())
                assert out.violations == ()
                assert out.exit_code == ro_out.exit_code


class TestExecution:
    def test_timeout_kills_within_double(self, tmp_path):
        spec = resolve_spec(SandboxMode.READ_ONLY, tmp_path)
        start = time.perf_counter()
        with pytest.raises(SandboxTimeout):
            execute(spec, ["sleep", "5"], tmp_path, timeout_ms=300, backend=NoneBackend())
        elapsed_ms = (time.perf_counter() - start) * 1000
        assert elapsed_ms < 600

    def test_spawn_failure(self, tmp_path):
        spec = resolve_spec(SandboxMode.READ_ONLY, tmp_path)
        with pytest.raises(SpawnFailure):
            execute(spec, ["/no/such/binary"], tmp_path, backend=NoneBackend())

    def test_stderr_captured(self, tmp_path):
        spec = resolve_spec(SandboxMode.READ_ONLY, tmp_path)
        outcome = execute(spec, ["sh", "-c", "echo oops >&2; exit 3"], tmp_path, backend=NoneBackend())
        assert outcome.exit_code == 3
        assert "oops" in outcome.stderr
