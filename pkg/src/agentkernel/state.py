"""Embedded versioned session persistence on SQLite in WAL mode.

One writer per store, readers concurrent. Logical tables: sessions,
messages, agents, memories, events (layout in docs/schema.md). Stores are
stamped state schema 5 / log schema 1 on creation; anything newer than the
supported schema refuses to open.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .protocol import AgentEvent, InputItem, canonical_json, item_from_wire, item_to_wire

STATE_SCHEMA = 5
LOG_SCHEMA = 1


class SchemaTooNew(RuntimeError):
    pass


class CorruptStore(RuntimeError):
    pass


class UnknownSession(KeyError):
    pass


@dataclass(frozen=True)
class StoreVersion:
    state_schema: int
    log_schema: int


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    created_at: float
    config: dict
    status: str


@dataclass(frozen=True)
class MemoryRecord:
    memory_id: str
    session_id: str
    text: str
    created_at: float


_TABLES = """
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS sessions (
    session_id TEXT PRIMARY KEY,
    created_at REAL NOT NULL,
    config_json TEXT NOT NULL,
    status TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS messages (
    session_id TEXT NOT NULL,
    seq INTEGER NOT NULL,
    item_json TEXT NOT NULL,
    PRIMARY KEY (session_id, seq)
);
CREATE TABLE IF NOT EXISTS agents (
    agent_id TEXT PRIMARY KEY,
    session_id TEXT NOT NULL,
    parent_id TEXT,
    depth INTEGER NOT NULL,
    status TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS memories (
    memory_id TEXT PRIMARY KEY,
    session_id TEXT NOT NULL REFERENCES sessions(session_id),
    text TEXT NOT NULL,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS events (
    session_id TEXT NOT NULL,
    seq INTEGER NOT NULL,
    event_json TEXT NOT NULL,
    PRIMARY KEY (session_id, seq)
);
"""


class Store:
    def __init__(self, path: Path, conn: sqlite3.Connection, version: StoreVersion) -> None:
        self.path = path
        self.version = version
        self._conn = conn
        self._write_lock = threading.Lock()

    def close(self) -> None:
        self._conn.close()

    # -- sessions / messages -------------------------------------------------

    def persist_session(self, session: SessionRecord, messages: list[InputItem]) -> None:
        with self._write_lock, self._conn:
            self._conn.execute(
                "INSERT INTO sessions (session_id, created_at, config_json, status) VALUES (?, ?, ?, ?) "
                "ON CONFLICT(session_id) DO UPDATE SET config_json=excluded.config_json, status=excluded.status",
                (session.session_id, session.created_at, canonical_json(session.config), session.status),
            )
            self._conn.execute("DELETE FROM messages WHERE session_id = ?", (session.session_id,))
            self._conn.executemany(
                "INSERT INTO messages (session_id, seq, item_json) VALUES (?, ?, ?)",
                [
                    (session.session_id, seq, canonical_json(item_to_wire(item)))
                    for seq, item in enumerate(messages)
                ],
            )

    def load_session(self, session_id: str) -> tuple[SessionRecord, list[InputItem]]:
        row = self._conn.execute(
            "SELECT session_id, created_at, config_json, status FROM sessions WHERE session_id = ?",
            (session_id,),
        ).fetchone()
        if row is None:
            raise UnknownSession(session_id)
        record = SessionRecord(
            session_id=row[0], created_at=row[1], config=json.loads(row[2]), status=row[3]
        )
        items = [
            item_from_wire(json.loads(item_json))
            for (item_json,) in self._conn.execute(
                "SELECT item_json FROM messages WHERE session_id = ? ORDER BY seq", (session_id,)
            )
        ]
        return record, items

    def session_ids(self) -> list[str]:
        return [r[0] for r in self._conn.execute("SELECT session_id FROM sessions ORDER BY created_at")]

    # -- events ---------------------------------------------------------------

    def append_event(self, session_id: str, event: AgentEvent) -> None:
        with self._write_lock, self._conn:
            (next_seq,) = self._conn.execute(
                "SELECT COALESCE(MAX(seq) + 1, 0) FROM events WHERE session_id = ?", (session_id,)
            ).fetchone()
            self._conn.execute(
                "INSERT INTO events (session_id, seq, event_json) VALUES (?, ?, ?)",
                (session_id, next_seq, event.to_json()),
            )

    def load_events(self, session_id: str) -> list[AgentEvent]:
        return [
            AgentEvent.from_wire(json.loads(event_json))
            for (event_json,) in self._conn.execute(
                "SELECT event_json FROM events WHERE session_id = ? ORDER BY seq", (session_id,)
            )
        ]

    # -- agents / memories ----------------------------------------------------

    def record_agent(self, agent_id: str, session_id: str, parent_id: Optional[str], depth: int, status: str) -> None:
        with self._write_lock, self._conn:
            self._conn.execute(
                "INSERT INTO agents (agent_id, session_id, parent_id, depth, status) VALUES (?, ?, ?, ?, ?) "
                "ON CONFLICT(agent_id) DO UPDATE SET status=excluded.status",
                (agent_id, session_id, parent_id, depth, status),
            )

    def add_memory(self, memory: MemoryRecord) -> None:
        exists = self._conn.execute(
            "SELECT 1 FROM sessions WHERE session_id = ?", (memory.session_id,)
        ).fetchone()
        if exists is None:
            raise UnknownSession(memory.session_id)
        with self._write_lock, self._conn:
            self._conn.execute(
                "INSERT INTO memories (memory_id, session_id, text, created_at) VALUES (?, ?, ?, ?)",
                (memory.memory_id, memory.session_id, memory.text, memory.created_at),
            )

    def memories_for(self, session_id: str) -> list[MemoryRecord]:
        return [
            MemoryRecord(*row)
            for row in self._conn.execute(
                "SELECT memory_id, session_id, text, created_at FROM memories WHERE session_id = ? "
                "ORDER BY created_at",
                (session_id,),
            )
        ]

    # -- export ----------------------------------------------------------------

    def export_session_jsonl(self, session_id: str) -> str:
        record, items = self.load_session(session_id)
        lines = [
            canonical_json(
                {
                    "config": record.config,
                    "created_at": record.created_at,
                    "kind": "session",
                    "session_id": record.session_id,
                    "status": record.status,
                }
            )
        ]
        lines.extend(canonical_json({"item": item_to_wire(i), "kind": "message"}) for i in items)
        lines.extend(
            canonical_json({"event": e.to_wire(), "kind": "event"}) for e in self.load_events(session_id)
        )
        return "\n".join(lines) + "\n"


def open_store(path: Path | str) -> Store:
    """Open or create a store; refuses schemas newer than this build."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not path.exists()
    conn = sqlite3.connect(path, check_same_thread=False)
    try:
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA synchronous=NORMAL")
        if fresh:
            with conn:
                conn.executescript(_TABLES)
                conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('state_schema', ?), ('log_schema', ?)",
                    (str(STATE_SCHEMA), str(LOG_SCHEMA)),
                )
        rows = dict(conn.execute("SELECT key, value FROM meta"))
    except sqlite3.DatabaseError as exc:
        conn.close()
        raise CorruptStore(f"{path}: {exc}") from exc

    try:
        version = StoreVersion(state_schema=int(rows["state_schema"]), log_schema=int(rows["log_schema"]))
    except (KeyError, ValueError) as exc:
        conn.close()
        raise CorruptStore(f"{path}: missing schema stamps") from exc
    if version.state_schema > STATE_SCHEMA or version.log_schema > LOG_SCHEMA:
        conn.close()
        raise SchemaTooNew(
            f"store is v{version.state_schema}/v{version.log_schema}, "
            f"this build supports v{STATE_SCHEMA}/v{LOG_SCHEMA}"
        )
    return Store(path=path, conn=conn, version=version)


def new_session_record(session_id: str, config: dict, status: str = "running") -> SessionRecord:
    return SessionRecord(session_id=session_id, created_at=time.time(), config=config, status=status)
