"""Append-only context memory: events, canonical serialization, log files.

Every store mutation is an event; the store is a pure fold over the event
sequence, which is what makes restarts and crash recovery provable. Events
are written in atomic batches (one batch per task or expert action); the
last event of a batch carries ``commit=True`` so a torn tail can be
detected and discarded on restore.
"""

from __future__ import annotations

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Optional

from pydantic import BaseModel, ConfigDict, Field

from .errors import PersistenceFailure, RestoreFailure

LOG_FORMAT_VERSION = 1


class EventKind(str, Enum):
    TASK_ENQUEUED = "task_enqueued"
    TASK_STARTED = "task_started"
    TASK_COMPLETED = "task_completed"
    TASK_FAILED = "task_failed"
    TASK_DEAD_LETTERED = "task_dead_lettered"
    HYPOTHESIS_CREATED = "hypothesis_created"
    HYPOTHESIS_STATE_CHANGED = "hypothesis_state_changed"
    REVIEW_ADDED = "review_added"
    ANNOTATION_ADDED = "annotation_added"
    MATCH_COMPLETED = "match_completed"
    PROXIMITY_UPDATED = "proximity_updated"
    STATS_SNAPSHOT = "stats_snapshot"
    META_CRITIQUE_UPDATED = "meta_critique_updated"
    OVERVIEW_UPDATED = "overview_updated"
    CONTACTS_UPDATED = "contacts_updated"
    PLAN_UPDATED = "plan_updated"
    GOAL_RECORDED = "goal_recorded"
    SAFETY_DECISION = "safety_decision"
    SAFETY_ALERT = "safety_alert"
    GUIDANCE_ADDED = "guidance_added"
    SESSION_STATE_CHANGED = "session_state_changed"


class ContextMemoryEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    seq: int
    timestamp: str
    kind: EventKind
    body: dict = Field(default_factory=dict)
    commit: bool = False


def canonical_json(data: object) -> str:
    """Stable serialization: sorted keys, tight separators, ASCII-safe."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def event_checksum(seq: int, timestamp: str, kind: str, body: dict) -> str:
    payload = canonical_json({"seq": seq, "ts": timestamp, "kind": kind, "body": body})
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def encode_event(event: ContextMemoryEvent) -> str:
    record = {
        "seq": event.seq,
        "ts": event.timestamp,
        "kind": event.kind.value,
        "body": event.body,
        "commit": event.commit,
        "checksum": event_checksum(event.seq, event.timestamp, event.kind.value, event.body),
    }
    return canonical_json(record)


def decode_event(line: str) -> ContextMemoryEvent:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RestoreFailure(f"unreadable event line: {exc}") from exc
    expected = event_checksum(record["seq"], record["ts"], record["kind"], record["body"])
    if record.get("checksum") != expected:
        raise RestoreFailure(f"checksum mismatch at seq {record.get('seq')}")
    return ContextMemoryEvent(
        seq=record["seq"],
        timestamp=record["ts"],
        kind=EventKind(record["kind"]),
        body=record["body"],
        commit=record.get("commit", False),
    )


class EventLogWriter:
    """Appends committed batches to a JSONL log file."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fh: IO[str] = open(self.path, "a", encoding="utf-8")
        except OSError as exc:
            raise PersistenceFailure(str(exc)) from exc

    def append_batch(self, events: Iterable[ContextMemoryEvent]) -> None:
        lines = [encode_event(e) for e in events]
        if not lines:
            return
        try:
            self._fh.write("\n".join(lines) + "\n")
            self._fh.flush()
        except OSError as exc:
            raise PersistenceFailure(str(exc)) from exc

    def close(self) -> None:
        self._fh.close()


class InMemoryEventLog:
    """Event sink for embedded/test sessions without a log file."""

    def __init__(self) -> None:
        self.events: list[ContextMemoryEvent] = []

    def append_batch(self, events: Iterable[ContextMemoryEvent]) -> None:
        self.events.extend(events)

    def close(self) -> None:
        pass


def read_event_log(
    path: str | Path,
    *,
    from_seq: int = 1,
    drop_torn_tail: bool = True,
    max_seq: Optional[int] = None,
) -> list[ContextMemoryEvent]:
    """Read events with seq >= from_seq, verifying checksums and contiguity.

    A trailing run of events after the last commit marker is a torn batch
    from a crash mid-write; with drop_torn_tail it is discarded, otherwise
    it is returned as-is (callers slicing logs for replay want that).
    """
    path = Path(path)
    if not path.is_file():
        raise RestoreFailure(f"no event log at {path}")
    events: list[ContextMemoryEvent] = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        event = decode_event(line)
        if max_seq is not None and event.seq > max_seq:
            break
        events.append(event)
    expected = None
    for event in events:
        if expected is not None and event.seq != expected:
            raise RestoreFailure(f"gap in event log: expected seq {expected}, got {event.seq}")
        expected = event.seq + 1
    if drop_torn_tail:
        last_commit = -1
        for i, event in enumerate(events):
            if event.commit:
                last_commit = i
        events = events[: last_commit + 1]
    return [e for e in events if e.seq >= from_seq]


def verify_tail_contiguous(events: list[ContextMemoryEvent], after_seq: int) -> None:
    expected = after_seq + 1
    for event in events:
        if event.seq != expected:
            raise RestoreFailure(
                f"gap in event tail: expected seq {expected}, got {event.seq}"
            )
        expected += 1
