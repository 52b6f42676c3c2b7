"""Dialogue state tracking: versioned, deduplicated slot accumulation.

Each session's state is an append-only fold of per-turn SlotSets. The
aggregate is always the plain set-union of everything committed so far, the
version is the number of commits, and snapshots are immutable reconstructions
at any past version. The store is single-writer per session (path B) and
commits are atomic with respect to readers.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

from .nlu import SlotSet

logger = logging.getLogger(__name__)


class DuplicateTurnError(ValueError):
    """A turn id was committed twice for one session."""


class UnknownSessionError(KeyError):
    pass


class StoreLoadError(ValueError):
    """Persistence file is corrupt or structurally invalid."""


@dataclass(frozen=True)
class DSTState:
    """Immutable snapshot of one session's accumulated dialogue state."""

    session_id: str
    version: int
    slots: "dict[str, frozenset[str]]"
    history: "tuple[tuple[int, SlotSet], ...]"

    def covered_categories(self) -> set[str]:
        return set(self.slots.keys())


def _union(slots: "dict[str, frozenset[str]]", incoming: SlotSet) -> "dict[str, frozenset[str]]":
    merged = dict(slots)
    for cat, vals in incoming.slots.items():
        merged[cat] = merged.get(cat, frozenset()) | vals
    return merged


def merge_slots(state: DSTState, incoming: SlotSet, turn_id: int) -> DSTState:
    """Fold one turn's slots into the state: set-union, version + 1.

    Merging is idempotent in content (re-adding known values changes nothing
    but the version) and commutative in effect across commit orders.
    """
    if any(t == turn_id for t, _ in state.history):
        raise DuplicateTurnError(
            "turn %d already committed for session %r" % (turn_id, state.session_id)
        )
    return DSTState(
        session_id=state.session_id,
        version=state.version + 1,
        slots=_union(state.slots, incoming),
        history=state.history + ((turn_id, incoming),),
    )


def empty_state(session_id: str) -> DSTState:
    return DSTState(session_id, 0, {}, ())


class DSTStore:
    """All sessions' dialogue states, with JSONL persistence."""

    def __init__(self):
        self._sessions: dict[str, DSTState] = {}

    def create_session(self, session_id: str) -> DSTState:
        if session_id in self._sessions:
            raise ValueError("session %r already exists" % session_id)
        state = empty_state(session_id)
        self._sessions[session_id] = state
        return state

    def has_session(self, session_id: str) -> bool:
        return session_id in self._sessions

    def session_ids(self) -> list[str]:
        return list(self._sessions.keys())

    def current_version(self, session_id: str) -> int:
        return self._state(session_id).version

    def commit(self, session_id: str, incoming: SlotSet, turn_id: int) -> int:
        """Atomically merge one turn's slots; returns the new version."""
        state = self._state(session_id)
        merged = merge_slots(state, incoming, turn_id)
        self._sessions[session_id] = merged
        return merged.version

    def get_snapshot(self, session_id: str, at_version: int | None = None) -> DSTState:
        """Immutable state at `at_version` (default: latest committed)."""
        state = self._state(session_id)
        if at_version is None or at_version == state.version:
            return state
        if at_version < 0 or at_version > state.version:
            raise ValueError(
                "version %d out of range for session %r (current %d)"
                % (at_version, session_id, state.version)
            )
        replayed = empty_state(session_id)
        for turn_id, slots in state.history[:at_version]:
            replayed = merge_slots(replayed, slots, turn_id)
        return replayed

    def _state(self, session_id: str) -> DSTState:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(session_id) from None

    # -- persistence ------------------------------------------------------

    def persist(self, path: str) -> None:
        """Write every session as replayable JSONL commit records."""
        lines = []
        for session_id, state in self._sessions.items():
            lines.append(_record_line(session_id, 0, None, SlotSet()))
            for version, (turn_id, slots) in enumerate(state.history, start=1):
                lines.append(_record_line(session_id, version, turn_id, slots))
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("".join(lines))
        os.replace(tmp, path)

    @staticmethod
    def load(path: str) -> "DSTStore":
        """Rebuild a store by replaying commit records in file order.

        Any malformed line aborts the load with StoreLoadError; no partially
        loaded store is ever returned.
        """
        store = DSTStore()
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
        for lineno, raw in enumerate(raw_lines, start=1):
            if not raw.strip():
                raise StoreLoadError("blank line %d in %s" % (lineno, path))
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise StoreLoadError(
                    "line %d of %s is not valid JSON: %s" % (lineno, path, exc)
                ) from None
            try:
                session_id = rec["session_id"]
                version = rec["version"]
                turn_id = rec["turn_id"]
                slots = rec["slots"]
                if set(rec.keys()) != {"session_id", "version", "turn_id", "slots"}:
                    raise KeyError("unexpected fields")
                if not isinstance(slots, dict):
                    raise TypeError("slots must be an object")
                slot_set = SlotSet.of(
                    {c: [str(v) for v in vs] for c, vs in slots.items()}
                )
            except (KeyError, TypeError) as exc:
                raise StoreLoadError(
                    "line %d of %s has invalid structure: %s" % (lineno, path, exc)
                ) from None
            if version == 0:
                if store.has_session(session_id):
                    raise StoreLoadError(
                        "line %d of %s redeclares session %r" % (lineno, path, session_id)
                    )
                store.create_session(session_id)
                continue
            if not store.has_session(session_id):
                raise StoreLoadError(
                    "line %d of %s commits to undeclared session %r"
                    % (lineno, path, session_id)
                )
            try:
                new_version = store.commit(session_id, slot_set, int(turn_id))
            except DuplicateTurnError as exc:
                raise StoreLoadError(str(exc)) from None
            if new_version != version:
                raise StoreLoadError(
                    "line %d of %s expects version %s but replay produced %d"
                    % (lineno, path, version, new_version)
                )
        return store

    def __eq__(self, other) -> bool:
        if not isinstance(other, DSTStore):
            return NotImplemented
        return self._sessions == other._sessions


def _record_line(session_id: str, version: int, turn_id: int | None, slots: SlotSet) -> str:
    payload = {
        "session_id": session_id,
        "version": version,
        "turn_id": turn_id,
        "slots": {cat: sorted(vals) for cat, vals in sorted(slots.slots.items())},
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n"
