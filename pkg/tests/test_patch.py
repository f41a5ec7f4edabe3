"""Patch dialect: parse, render, apply, conflicts, diff roundtrips."""

from __future__ import annotations

import difflib
import random

import pytest

from agentkernel.tools.patch import (
    AddFile,
    DeleteFile,
    Hunk,
    PatchConflict,
    PatchDocument,
    PatchParseError,
    UpdateFile,
    apply_patch,
    parse_patch,
    render_patch,
)

ADD_TEXT = """*** Begin Patch
*** Add File: pkg/new_module.py
+def hello():
+    return 42
+
*** End Patch
"""

MULTI_HUNK = """*** Begin Patch
*** Update File: app.py
@@
 import os
-OLD = 1
+NEW = 2
@@
 def main():
-    return OLD
+    return NEW
*** End Patch
"""


class TestParse:
    def test_add_file(self):
        doc = parse_patch(ADD_TEXT)
        assert len(doc.ops) == 1
        op = doc.ops[0]
        assert isinstance(op, AddFile)
        assert op.path == "pkg/new_module.py"
        assert op.content == "def hello():\n    return 42\n\n"

    def test_multi_hunk_update_ordered(self):
        doc = parse_patch(MULTI_HUNK)
        (op,) = doc.ops
        assert isinstance(op, UpdateFile)
        assert len(op.hunks) == 2
        assert op.hunks[0].removed == ("OLD = 1",)
        assert op.hunks[1].added == ("    return NEW",)

    def test_empty_text(self):
        assert parse_patch("").ops == ()
        assert parse_patch("   \n  ").ops == ()

    def test_delete_directive(self):
        doc = parse_patch("*** Begin Patch\n*** Delete File: old.txt\n*** End Patch\n")
        assert doc.ops == (DeleteFile(path="old.txt"),)

    def test_unrecognized_directive_carries_line(self):
        bad = "*** Begin Patch\n*** Rename File: a.txt\n*** End Patch\n"
        with pytest.raises(PatchParseError) as err:
            parse_patch(bad)
        assert err.value.line_no == 2

    def test_path_traversal_rejected(self):
        bad = "*** Begin Patch\n*** Add File: ../escape.txt\n+x\n*** End Patch\n"
        with pytest.raises(PatchParseError):
            parse_patch(bad)

    def test_absolute_path_rejected(self):
        bad = "*** Begin Patch\n*** Delete File: /etc/passwd\n*** End Patch\n"
        with pytest.raises(PatchParseError):
            parse_patch(bad)

    def test_duplicate_file_rejected(self):
        bad = (
            "*** Begin Patch\n*** Delete File: a.txt\n*** Delete File: a.txt\n*** End Patch\n"
        )
        with pytest.raises(PatchParseError):
            parse_patch(bad)

    def test_missing_end_rejected(self):
        with pytest.raises(PatchParseError):
            parse_patch("*** Begin Patch\n*** Delete File: a.txt\n")

    def test_render_parse_roundtrip(self):
        doc = parse_patch(MULTI_HUNK)
        assert parse_patch(render_patch(doc)) == doc


class TestApply:
    def test_add_creates_file(self, tmp_path):
        report = apply_patch(parse_patch(ADD_TEXT), tmp_path)
        assert (tmp_path / "pkg" / "new_module.py").read_text() == "def hello():\n    return 42\n\n"
        assert report.outcomes[0].action == "added"

    def test_add_existing_conflicts(self, tmp_path):
        (tmp_path / "pkg").mkdir()
        (tmp_path / "pkg" / "new_module.py").write_text("already here\n")
        with pytest.raises(PatchConflict):
            apply_patch(parse_patch(ADD_TEXT), tmp_path)
        assert (tmp_path / "pkg" / "new_module.py").read_text() == "already here\n"

    def test_update_multi_hunk(self, tmp_path):
        (tmp_path / "app.py").write_text("import os\nOLD = 1\n\ndef main():\n    return OLD\n")
        apply_patch(parse_patch(MULTI_HUNK), tmp_path)
        assert (tmp_path / "app.py").read_text() == "import os\nNEW = 2\n\ndef main():\n    return NEW\n"

    def test_delete_missing_conflicts(self, tmp_path):
        doc = parse_patch("*** Begin Patch\n*** Delete File: ghost.txt\n*** End Patch\n")
        with pytest.raises(PatchConflict):
            apply_patch(doc, tmp_path)

    def test_tampered_context_conflicts_without_writing(self, tmp_path):
        (tmp_path / "app.py").write_text("import os\nEDITED = 9\n\ndef main():\n    return OLD\n")
        before = (tmp_path / "app.py").read_text()
        with pytest.raises(PatchConflict) as err:
            apply_patch(parse_patch(MULTI_HUNK), tmp_path)
        assert (tmp_path / "app.py").read_text() == before
        assert err.value.path == "app.py"
        assert err.value.hunk_index == 0
        assert "OLD = 1" in err.value.expected

    def test_all_or_nothing_across_files(self, tmp_path):
        (tmp_path / "one.txt").write_text("alpha\n")
        doc = PatchDocument(
            ops=(
                UpdateFile(
                    path="one.txt",
                    hunks=(Hunk(context_before=(), removed=("alpha",), added=("beta",), context_after=()),),
                ),
                DeleteFile(path="missing.txt"),
            )
        )
        with pytest.raises(PatchConflict):
            apply_patch(doc, tmp_path)
        assert (tmp_path / "one.txt").read_text() == "alpha\n"


# -- diff-based roundtrip against difflib as the independent oracle -------------


def hunks_from_difflib(a_lines: list[str], b_lines: list[str], context: int = 2) -> list[Hunk]:
    """Independent hunk builder on difflib opcodes; context is clamped to
    the gap between changes so runs never bleed into each other."""
    matcher = difflib.SequenceMatcher(a=a_lines, b=b_lines, autojunk=False)
    changes = [op for op in matcher.get_opcodes() if op[0] != "equal"]
    hunks = []
    for index, (tag, i1, i2, j1, j2) in enumerate(changes):
        prev_end = changes[index - 1][2] if index > 0 else 0
        next_start = changes[index + 1][1] if index + 1 < len(changes) else len(a_lines)
        before = a_lines[max(prev_end, i1 - context) : i1]
        after = a_lines[i2 : min(i2 + context, next_start)]
        hunks.append(
            Hunk(
                context_before=tuple(before),
                removed=tuple(a_lines[i1:i2]),
                added=tuple(b_lines[j1:j2]),
                context_after=tuple(after),
            )
        )
    return hunks


def random_file(rng: random.Random, max_lines: int = 24) -> list[str]:
    vocab = ["alpha", "beta", "gamma", "delta", "x = 1", "def f():", "    pass", ""]
    return [rng.choice(vocab) + (f" {i}" if rng.random() < 0.4 else "") for i in range(rng.randint(0, max_lines))]


def mutate(rng: random.Random, lines: list[str]) -> list[str]:
    out = list(lines)
    for _ in range(rng.randint(1, 4)):
        roll = rng.random()
        if roll < 0.33 and out:
            del out[rng.randrange(len(out))]
        elif roll < 0.66:
            out.insert(rng.randint(0, len(out)), f"inserted {rng.randint(0, 999)}")
        elif out:
            out[rng.randrange(len(out))] = f"replaced {rng.randint(0, 999)}"
    return out


class TestDiffRoundtrip:
    def test_apply_parse_diff_reproduces_target(self, tmp_path):
        rng = random.Random(1234)
        failures = 0
        trials = 500
        for trial in range(trials):
            a_lines = random_file(rng)
            b_lines = mutate(rng, a_lines)
            hunks = hunks_from_difflib(a_lines, b_lines)
            if not hunks:
                continue
            workdir = tmp_path / f"t{trial}"
            workdir.mkdir()
            target = workdir / "file.txt"
            a_text = "\n".join(a_lines) + "\n" if a_lines else ""
            b_text = "\n".join(b_lines) + "\n" if b_lines else ""
            target.write_text(a_text)
            doc = PatchDocument(ops=(UpdateFile(path="file.txt", hunks=tuple(hunks)),))
            text = render_patch(doc)
            try:
                apply_patch(parse_patch(text), workdir)
            except PatchConflict:
                failures += 1
                continue
            assert target.read_text() == b_text, f"trial {trial}"
        # difflib context can be ambiguous for pathological repeats; the
        # engine must still succeed on effectively all generated pairs.
        assert failures <= trials * 0.01

    def test_roundtrip_with_empty_target(self, tmp_path):
        (tmp_path / "f.txt").write_text("only line\n")
        doc = PatchDocument(
            ops=(
                UpdateFile(
                    path="f.txt",
                    hunks=(Hunk(context_before=(), removed=("only line",), added=(), context_after=()),),
                ),
            )
        )
        apply_patch(doc, tmp_path)
        assert (tmp_path / "f.txt").read_text() == ""
