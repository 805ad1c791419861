"""Content-addressed spec storage and append-only session logs.

Specs are stored under their canonical-serialization sha256, two-level
fanout (``artifacts/ab/abcd....json``), written atomically via a temp
file and rename. Reads re-hash the bytes, so silent corruption surfaces
as :class:`HashMismatch` rather than a wrong spec. Session event logs are
JSON Lines, append-only, guarded by one in-process lock per session.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from pathlib import Path

from .core import InvalidSpec, TaskSpec, canonical_serialize, deserialize_spec

_SESSION_ID_RE = re.compile(r"^[a-z0-9][a-z0-9\-]{0,63}$")
_HASH_RE = re.compile(r"^[0-9a-f]{64}$")


class NotFound(KeyError):
    """No artifact or session under that key."""


class HashMismatch(ValueError):
    """Stored bytes no longer hash to their address."""


class Store:
    def __init__(self, root: os.PathLike | str) -> None:
        self.root = Path(root)
        self.artifacts_dir = self.root / "artifacts"
        self.sessions_dir = self.root / "sessions"
        self.artifacts_dir.mkdir(parents=True, exist_ok=True)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- artifacts ---------------------------------------------------------

    def _artifact_path(self, digest: str) -> Path:
        if not _HASH_RE.match(digest):
            raise NotFound(f"not a sha256 address: {digest!r}")
        return self.artifacts_dir / digest[:2] / f"{digest}.json"

    def put_spec(self, spec: TaskSpec) -> str:
        """Store a spec; returns its address. Idempotent."""
        data = canonical_serialize(spec)
        digest = hashlib.sha256(data).hexdigest()
        path = self._artifact_path(digest)
        if path.exists():
            return digest
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.parent / f".{digest}.{os.getpid()}.{threading.get_ident()}.tmp"
        tmp.write_bytes(data)
        os.replace(tmp, path)
        return digest

    def get_bytes(self, digest: str) -> bytes:
        path = self._artifact_path(digest)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise NotFound(digest) from None
        actual = hashlib.sha256(data).hexdigest()
        if actual != digest:
            raise HashMismatch(f"artifact {digest[:12]}... hashes to {actual[:12]}...")
        return data

    def get_spec(self, digest: str) -> TaskSpec:
        return deserialize_spec(self.get_bytes(digest))

    def has(self, digest: str) -> bool:
        try:
            return self._artifact_path(digest).exists()
        except NotFound:
            return False

    # -- sessions ----------------------------------------------------------

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._locks.get(session_id)
            if lock is None:
                lock = threading.Lock()
                self._locks[session_id] = lock
            return lock

    def _session_path(self, session_id: str) -> Path:
        if not _SESSION_ID_RE.match(session_id):
            raise NotFound(f"bad session id: {session_id!r}")
        return self.sessions_dir / session_id / "log.jsonl"

    def create_session(self, session_id: str) -> None:
        path = self._session_path(session_id)
        with self._session_lock(session_id):
            if path.exists():
                raise InvalidSpec(f"session {session_id!r} already exists")
            path.parent.mkdir(parents=True, exist_ok=True)
            path.touch()

    def session_exists(self, session_id: str) -> bool:
        try:
            return self._session_path(session_id).exists()
        except NotFound:
            return False

    def append_event(self, session_id: str, event: dict) -> int:
        """Append one event; returns its sequence number (0-based)."""
        path = self._session_path(session_id)
        with self._session_lock(session_id):
            if not path.exists():
                raise NotFound(f"no session {session_id!r}")
            events = self._read_locked(path)
            seq = len(events)
            record = dict(event)
            record["seq"] = seq
            line = json.dumps(record, sort_keys=True, separators=(",", ":"))
            with path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            return seq

    def read_events(self, session_id: str) -> list[dict]:
        path = self._session_path(session_id)
        with self._session_lock(session_id):
            if not path.exists():
                raise NotFound(f"no session {session_id!r}")
            return self._read_locked(path)

    @staticmethod
    def _read_locked(path: Path) -> list[dict]:
        events = []
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    events.append(json.loads(line))
        return events

    def list_sessions(self) -> list[str]:
        out = []
        for child in sorted(self.sessions_dir.iterdir()):
            if child.is_dir() and (child / "log.jsonl").exists():
                out.append(child.name)
        return out
