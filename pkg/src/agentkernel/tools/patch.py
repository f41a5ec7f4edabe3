"""Structured patch engine: parse, validate, apply, render.

The accepted dialect is a unified-diff variant wrapped in an explicit
envelope (grammar in docs/patch_grammar.md):

    *** Begin Patch
    *** Add File: path/new.txt
    +line one
    *** Update File: path/old.txt
    @@
     context before
    -removed
    +added
     context after
    *** Delete File: path/gone.txt
    *** End Patch

Each ``@@`` hunk holds one contiguous change run. Application is
all-or-nothing: every hunk of every file is validated against the current
content before a single byte is written.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union


class PatchParseError(ValueError):
    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"patch line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class PatchConflict(RuntimeError):
    def __init__(self, path: str, hunk_index: int, expected: str, found: str) -> None:
        super().__init__(f"{path}: hunk {hunk_index} does not match current content")
        self.path = path
        self.hunk_index = hunk_index
        self.expected = expected
        self.found = found


@dataclass(frozen=True)
class Hunk:
    context_before: tuple[str, ...]
    removed: tuple[str, ...]
    added: tuple[str, ...]
    context_after: tuple[str, ...]


@dataclass(frozen=True)
class AddFile:
    path: str
    content: str


@dataclass(frozen=True)
class DeleteFile:
    path: str


@dataclass(frozen=True)
class UpdateFile:
    path: str
    hunks: tuple[Hunk, ...]


PatchOp = Union[AddFile, DeleteFile, UpdateFile]


@dataclass(frozen=True)
class PatchDocument:
    ops: tuple[PatchOp, ...]


@dataclass(frozen=True)
class FileOutcome:
    path: str
    action: str  # added | deleted | updated


@dataclass(frozen=True)
class ApplyReport:
    outcomes: tuple[FileOutcome, ...]


_BEGIN = "*** Begin Patch"
_END = "*** End Patch"
_ADD = "*** Add File: "
_UPDATE = "*** Update File: "
_DELETE = "*** Delete File: "


def _check_path(path: str, line_no: int) -> str:
    p = Path(path)
    if p.is_absolute():
        raise PatchParseError(line_no, f"absolute path not allowed: {path}")
    if ".." in p.parts:
        raise PatchParseError(line_no, f"path traversal not allowed: {path}")
    if not path.strip():
        raise PatchParseError(line_no, "empty path")
    return path.strip()


def parse_patch(text: str) -> PatchDocument:
    lines = text.splitlines()
    ops: list[PatchOp] = []
    i = 0
    n = len(lines)

    # The envelope is optional for empty input but required once any
    # directive appears.
    if not text.strip():
        return PatchDocument(ops=())
    if lines and lines[0].strip() == _BEGIN:
        i = 1
    seen_paths: set[str] = set()

    while i < n:
        line = lines[i]
        if line.strip() == _END:
            i += 1
            break
        if line.startswith(_ADD):
            path = _check_path(line[len(_ADD) :], i + 1)
            _reject_duplicate(path, seen_paths, i + 1)
            i += 1
            content_lines = []
            while i < n and lines[i].startswith("+"):
                content_lines.append(lines[i][1:])
                i += 1
            content = "\n".join(content_lines) + ("\n" if content_lines else "")
            ops.append(AddFile(path=path, content=content))
        elif line.startswith(_DELETE):
            path = _check_path(line[len(_DELETE) :], i + 1)
            _reject_duplicate(path, seen_paths, i + 1)
            ops.append(DeleteFile(path=path))
            i += 1
        elif line.startswith(_UPDATE):
            path = _check_path(line[len(_UPDATE) :], i + 1)
            _reject_duplicate(path, seen_paths, i + 1)
            i += 1
            hunks, i = _parse_hunks(lines, i)
            if not hunks:
                raise PatchParseError(i, f"update for {path} has no hunks")
            ops.append(UpdateFile(path=path, hunks=tuple(hunks)))
        elif not line.strip():
            i += 1
        else:
            raise PatchParseError(i + 1, f"unrecognized directive: {line!r}")
    else:
        if lines and lines[0].strip() == _BEGIN:
            raise PatchParseError(n, "missing *** End Patch")

    for j in range(i, n):
        if lines[j].strip():
            raise PatchParseError(j + 1, "content after *** End Patch")
    return PatchDocument(ops=tuple(ops))


def _reject_duplicate(path: str, seen: set[str], line_no: int) -> None:
    if path in seen:
        raise PatchParseError(line_no, f"file appears twice: {path}")
    seen.add(path)


def _parse_hunks(lines: list[str], i: int) -> tuple[list[Hunk], int]:
    n = len(lines)
    hunks: list[Hunk] = []
    while i < n and lines[i].startswith("@@"):
        i += 1
        before: list[str] = []
        removed: list[str] = []
        added: list[str] = []
        after: list[str] = []
        # one contiguous run: context, removals, additions, context
        stage = 0  # 0=before 1=removed 2=added 3=after
        while i < n:
            line = lines[i]
            if line.startswith("@@") or line.startswith("*** "):
                break
            if line.startswith(" ") or line == "":
                text = line[1:] if line.startswith(" ") else ""
                if stage in (0,):
                    before.append(text)
                else:
                    stage = 3
                    after.append(text)
            elif line.startswith("-"):
                if stage >= 2:
                    raise PatchParseError(i + 1, "removal after additions; start a new @@ hunk")
                stage = 1
                removed.append(line[1:])
            elif line.startswith("+"):
                if stage == 3:
                    raise PatchParseError(i + 1, "addition after trailing context; start a new @@ hunk")
                stage = 2
                added.append(line[1:])
            else:
                raise PatchParseError(i + 1, f"bad hunk line: {line!r}")
            i += 1
        if not (removed or added):
            raise PatchParseError(i, "hunk with no changes")
        hunks.append(
            Hunk(
                context_before=tuple(before),
                removed=tuple(removed),
                added=tuple(added),
                context_after=tuple(after),
            )
        )
    return hunks, i


def render_patch(doc: PatchDocument) -> str:
    out: list[str] = [_BEGIN]
    for op in doc.ops:
        if isinstance(op, AddFile):
            out.append(_ADD + op.path)
            for line in op.content.splitlines():
                out.append("+" + line)
        elif isinstance(op, DeleteFile):
            out.append(_DELETE + op.path)
        else:
            out.append(_UPDATE + op.path)
            for hunk in op.hunks:
                out.append("@@")
                out.extend(" " + l for l in hunk.context_before)
                out.extend("-" + l for l in hunk.removed)
                out.extend("+" + l for l in hunk.added)
                out.extend(" " + l for l in hunk.context_after)
    out.append(_END)
    return "\n".join(out) + "\n"


def _split_lines(content: str) -> list[str]:
    if content == "":
        return []
    return content.split("\n")[:-1] if content.endswith("\n") else content.split("\n")


def _join_lines(lines: list[str]) -> str:
    return "\n".join(lines) + "\n" if lines else ""


def _find_hunk(file_lines: list[str], hunk: Hunk, start: int) -> int:
    """Position of the hunk needle at or after start, -1 when absent."""
    needle = list(hunk.context_before) + list(hunk.removed) + list(hunk.context_after)
    if not needle:
        return start
    limit = len(file_lines) - len(needle)
    for pos in range(start, limit + 1):
        if file_lines[pos : pos + len(needle)] == needle:
            return pos
    return -1


def _apply_hunks(path: str, content: str, hunks: tuple[Hunk, ...]) -> str:
    lines = _split_lines(content)
    cursor = 0
    out: list[str] = []
    for index, hunk in enumerate(hunks):
        pos = _find_hunk(lines, hunk, cursor)
        if pos < 0:
            expected = "\n".join(list(hunk.context_before) + list(hunk.removed) + list(hunk.context_after))
            found = "\n".join(lines[cursor : cursor + 8])
            raise PatchConflict(path, index, expected, found)
        out.extend(lines[cursor:pos])
        out.extend(hunk.context_before)
        out.extend(hunk.added)
        # Trailing context is validated by the needle search but stays in
        # the input stream: adjacent hunks may share it as leading context.
        cursor = pos + len(hunk.context_before) + len(hunk.removed)
    out.extend(lines[cursor:])
    return _join_lines(out)


def apply_patch(doc: PatchDocument, root: Path) -> ApplyReport:
    """Validate every op against the tree, then write. Nothing is modified
    when any op conflicts."""
    root = Path(root)
    staged: list[tuple[str, str, Optional[str]]] = []  # (action, path, new content)
    for op in doc.ops:
        target = root / op.path
        if isinstance(op, AddFile):
            if target.exists():
                raise PatchConflict(op.path, 0, "(file absent)", "(file exists)")
            staged.append(("added", op.path, op.content))
        elif isinstance(op, DeleteFile):
            if not target.is_file():
                raise PatchConflict(op.path, 0, "(file present)", "(file missing)")
            staged.append(("deleted", op.path, None))
        else:
            if not target.is_file():
                raise PatchConflict(op.path, 0, "(file present)", "(file missing)")
            current = target.read_text()
            staged.append(("updated", op.path, _apply_hunks(op.path, current, op.hunks)))

    outcomes = []
    for action, rel, content in staged:
        target = root / rel
        if action == "deleted":
            target.unlink()
        else:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content if content is not None else "")
        outcomes.append(FileOutcome(path=rel, action=action))
    return ApplyReport(outcomes=tuple(outcomes))
