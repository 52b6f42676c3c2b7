"""The dual-path turn engine.

Every user turn fans out into two concurrent paths at the same instant:

* Path A (respond): build a reply prompt from the *previous* turn's
  committed understanding, call the backend, then speak the reply.
* Path B (understand): extract preference slots from the user text,
  commit them to the dialogue state store, and run the spot search.

Path A never waits for this turn's path B. Instead, the next turn opens
with a barrier that waits (bounded by :class:`BarrierPolicy`) for the
previous turn's B to finish; if B overruns its grace window the turn
proceeds on the latest committed state and is marked stale, and the late
commit simply becomes visible at a later barrier. Because B overlaps the
system's own speech plus the user's think time, it usually costs the user
nothing: the perceived gap collapses to the reply latency alone.

The engine is written against the kernel interface in :mod:`.clock`, so
the same coroutines run under the deterministic virtual clock (tests,
simulation) and under asyncio (service, REPL). All span arithmetic is in
integer microseconds.
"""

from __future__ import annotations

import logging
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .backends import BackendRequest, Purpose
from .clock import sec3, us
from .dst import DSTStore
from .nlu import PromptBudget, extract_slots
from .prompts import build_respond_prompt
from .rtdb import RankedSpots, SpotCatalog, search
from .scenario import (
    DialoguePhase,
    MockRouteProvider,
    PresentAction,
    RouteAction,
    ScenarioState,
    TurnPlan,
    apply_plan,
    plan_turn,
)

logger = logging.getLogger(__name__)

PRESENT_K = 4


class TaskKind(str, Enum):
    RESPOND = "Respond"
    SPEAK = "Speak"
    NLU = "Nlu"
    DST_COMMIT = "DstCommit"
    SEARCH = "Search"
    BARRIER_WAIT = "BarrierWait"


class Speaker(str, Enum):
    USER = "User"
    SYSTEM = "System"


class TurnAbortedError(RuntimeError):
    """Path A's backend failed; the turn was rolled back entirely."""


class SessionEndedError(RuntimeError):
    """The dialogue already reached End; no further turns are accepted."""


class TraceInvariantError(AssertionError):
    pass


@dataclass(frozen=True)
class Span:
    task: TaskKind
    start_us: int
    end_us: int

    def __post_init__(self):
        if self.end_us < self.start_us:
            raise ValueError("span ends before it starts")

    def duration_us(self) -> int:
        return self.end_us - self.start_us


@dataclass(frozen=True)
class Utterance:
    speaker: Speaker
    text: str
    turn_id: int

    def __post_init__(self):
        if self.speaker is Speaker.SYSTEM and not self.text:
            raise ValueError("system utterances must carry text")
        if self.turn_id < 0:
            raise ValueError("turn_id must be non-negative")


@dataclass
class TurnTrace:
    """Spans of one turn. B spans land here even if they finish turns later."""

    turn_id: int
    dst_version_used: int
    start_us: int
    stale: bool = False
    spans: list[Span] = field(default_factory=list)

    def span(self, kind: TaskKind) -> Span | None:
        for s in self.spans:
            if s.task is kind:
                return s
        return None

    def gap_us(self) -> int:
        """Perceived gap: user utterance end to system speech start."""
        speak = self.span(TaskKind.SPEAK)
        if speak is None:
            raise ValueError("turn %d has no Speak span yet" % self.turn_id)
        return speak.start_us - self.start_us

    def barrier_wait_us(self) -> int:
        barrier = self.span(TaskKind.BARRIER_WAIT)
        return 0 if barrier is None else barrier.duration_us()


@dataclass(frozen=True)
class SpeechTimingModel:
    chars_per_second: float = 8.0
    user_gap_seconds: float = 1.0

    def __post_init__(self):
        if self.chars_per_second <= 0:
            raise ValueError("chars_per_second must be positive")
        if self.user_gap_seconds < 0:
            raise ValueError("user_gap_seconds must be non-negative")


@dataclass(frozen=True)
class BarrierPolicy:
    grace_timeout_seconds: float = 2.0
    on_timeout: str = "UseStale"

    def __post_init__(self):
        if self.grace_timeout_seconds < 0:
            raise ValueError("grace timeout must be non-negative")
        if self.on_timeout != "UseStale":
            raise ValueError("only the UseStale timeout policy exists")


@dataclass(frozen=True)
class BarrierResult:
    fresh: bool
    dst_version: int
    wait_us: int


@dataclass(frozen=True)
class LatencyProfile:
    """Injected latency per pipeline stage; None means no injected delay.

    Each entry is a distribution object exposing ``sample() -> seconds``.
    The engine draws exactly once per stage per turn, in turn order, which
    keeps draws paired between async and sequential runs of one script.
    """

    respond: object | None = None
    nlu: object | None = None
    search: object | None = None


def estimate_speech_duration(text: str, model: SpeechTimingModel) -> float:
    """Synthesis-free speech time: characters over the model's speaking rate."""
    return len(text) / model.chars_per_second


def _speech_us(text: str, model: SpeechTimingModel) -> int:
    return us(estimate_speech_duration(text, model))


@dataclass
class DialogueSession:
    """Mutable per-session engine state. One in-flight turn at a time."""

    session_id: str
    scenario: ScenarioState
    transcript: list[Utterance] = field(default_factory=list)
    traces: list[TurnTrace] = field(default_factory=list)
    next_turn_id: int = 0
    pending_b: object | None = None
    latest_search: RankedSpots | None = None
    unstreamed: list[tuple[int, Span]] = field(default_factory=list)
    started: bool = False

    @property
    def phase(self) -> DialoguePhase:
        return self.scenario.phase


class DialogueEngine:
    """Runs sessions of the sightseeing dialogue over a pluggable kernel."""

    def __init__(
        self,
        kernel,
        backend,
        catalog: SpotCatalog,
        *,
        timing: SpeechTimingModel | None = None,
        barrier: BarrierPolicy | None = None,
        budget: PromptBudget | None = None,
        latency: LatencyProfile | None = None,
        route_provider=None,
        dst: DSTStore | None = None,
        emit: Callable[[str, dict], None] | None = None,
    ):
        self.kernel = kernel
        self.backend = backend
        self.catalog = catalog
        self.vocab = catalog.vocabulary
        self.timing = timing or SpeechTimingModel()
        self.barrier = barrier or BarrierPolicy()
        self.budget = budget or PromptBudget()
        self.latency = latency or LatencyProfile()
        self.route_provider = route_provider or MockRouteProvider()
        self.dst = dst or DSTStore()
        self.emit = emit
        self.sessions: dict[str, DialogueSession] = {}

    # -- session lifecycle ------------------------------------------------

    def create_session(self, session_id: str | None = None) -> DialogueSession:
        sid = session_id or str(uuid.uuid4())
        if sid in self.sessions:
            raise ValueError("session %r already exists" % sid)
        self.dst.create_session(sid)
        session = DialogueSession(session_id=sid, scenario=ScenarioState())
        self.sessions[sid] = session
        return session

    def get_session(self, session_id: str) -> DialogueSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise KeyError("unknown session %r" % session_id) from None

    async def start_session(self, session: DialogueSession):
        """Speak the welcome line (turn 0). System-only: no path B runs."""
        if session.started:
            raise ValueError("session %r already started" % session.session_id)
        if session.phase is not DialoguePhase.WELCOME:
            raise ValueError("cannot welcome in phase %s" % session.phase.value)
        k = self.kernel
        t0 = k.now_us()
        turn_id = session.next_turn_id
        trace = TurnTrace(turn_id, self.dst.current_version(session.session_id), t0)
        plan = plan_turn(
            session.scenario, self.catalog, self.vocab,
            self.dst.get_snapshot(session.session_id), None, "", self.route_provider,
        )
        reply, _ = await self._respond(session, turn_id, plan, "", trace, t0)
        session.started = True
        session.next_turn_id = turn_id + 1
        utterance = Utterance(Speaker.SYSTEM, reply, turn_id)
        session.transcript.append(utterance)
        apply_plan(session.scenario, plan)
        await self._speak_and_close_turn(session, trace, utterance, plan)
        return utterance, trace

    # -- turn protocol ----------------------------------------------------

    async def run_turn(self, session: DialogueSession, user_text: str):
        """One asynchronous dual-path turn. Returns (utterance, trace)."""
        if not user_text:
            raise ValueError("user_text must be non-empty")
        if session.phase is DialoguePhase.END:
            raise SessionEndedError("dialogue already ended")
        k = self.kernel
        t0 = k.now_us()
        turn_id = session.next_turn_id
        self._flush_spans(session)
        self._emit(session, "user_echo", turn_id, {"text": user_text})

        barrier = await self.barrier_join(session)
        tb = k.now_us()
        trace = TurnTrace(turn_id, barrier.dst_version, t0, stale=not barrier.fresh)
        self._add_span(session, trace, TaskKind.BARRIER_WAIT, t0, tb)

        snapshot, ranked = self.snapshot_for_prompt(session)
        plan = plan_turn(
            session.scenario, self.catalog, self.vocab, snapshot, ranked,
            user_text, self.route_provider,
        )
        # Path A's backend call happens before anything is committed, so a
        # failure aborts the turn with the session untouched.
        try:
            reply, _ = await self._respond_with_fanout(
                session, turn_id, plan, user_text, trace, tb
            )
        except TurnAbortedError:
            session.unstreamed = [
                (tid, span) for tid, span in session.unstreamed if tid != turn_id
            ]
            raise
        session.next_turn_id = turn_id + 1
        session.transcript.append(Utterance(Speaker.USER, user_text, turn_id))
        utterance = Utterance(Speaker.SYSTEM, reply, turn_id)
        session.transcript.append(utterance)
        apply_plan(session.scenario, plan)
        await self._speak_and_close_turn(session, trace, utterance, plan)
        return utterance, trace

    async def run_turn_sequential(self, session: DialogueSession, user_text: str):
        """Baseline pipeline: understand, search, then respond, in series."""
        if not user_text:
            raise ValueError("user_text must be non-empty")
        if session.phase is DialoguePhase.END:
            raise SessionEndedError("dialogue already ended")
        k = self.kernel
        t0 = k.now_us()
        turn_id = session.next_turn_id
        self._flush_spans(session)
        self._emit(session, "user_echo", turn_id, {"text": user_text})

        nlu_draw = self._draw_us(self.latency.nlu)
        extract = await k.call_blocking(
            lambda: extract_slots(
                user_text, self.vocab, self.backend, self.budget,
                session.session_id, turn_id,
            )
        )
        await k.sleep_us(nlu_draw + us(extract.latency_injected))
        t1 = k.now_us()
        trace = TurnTrace(turn_id, 0, t0)
        self._add_span(session, trace, TaskKind.NLU, t0, t1)
        if not extract.degraded:
            self.dst.commit(session.session_id, extract.slots, turn_id)
            self._add_span(session, trace, TaskKind.DST_COMMIT, t1, k.now_us())
        await k.sleep_us(self._draw_us(self.latency.search))
        dst_now = self.dst.get_snapshot(session.session_id)
        ranked = search(
            self.catalog, dst_now, PRESENT_K,
            exclude=frozenset(session.scenario.presented_ever),
        )
        t2 = k.now_us()
        self._add_span(session, trace, TaskKind.SEARCH, t1, t2)
        self._note_search(session, ranked)
        trace.dst_version_used = dst_now.version

        plan = plan_turn(
            session.scenario, self.catalog, self.vocab, dst_now, ranked,
            user_text, self.route_provider,
        )
        reply, _ = await self._respond(session, turn_id, plan, user_text, trace, t2)
        session.next_turn_id = turn_id + 1
        session.transcript.append(Utterance(Speaker.USER, user_text, turn_id))
        utterance = Utterance(Speaker.SYSTEM, reply, turn_id)
        session.transcript.append(utterance)
        apply_plan(session.scenario, plan)
        await self._speak_and_close_turn(session, trace, utterance, plan)
        return utterance, trace

    async def barrier_join(self, session: DialogueSession) -> BarrierResult:
        """Wait (bounded) for the previous turn's path B; never an error.

        Fresh means the awaited B task finished within the grace window (or
        there was nothing to wait for). Stale means the grace expired; the
        returned version is then simply the latest committed one, and the
        late task keeps running on its own.
        """
        k = self.kernel
        t0 = k.now_us()
        pending = session.pending_b
        if pending is None:
            fresh = True
        else:
            grace_us = us(self.barrier.grace_timeout_seconds)
            fresh = await k.wait_for(pending.done_event, grace_us)
            if fresh:
                session.pending_b = None
        return BarrierResult(
            fresh=fresh,
            dst_version=self.dst.current_version(session.session_id),
            wait_us=k.now_us() - t0,
        )

    def snapshot_for_prompt(self, session: DialogueSession):
        """Immutable (DST state, latest search) pair for prompt building."""
        return (
            self.dst.get_snapshot(session.session_id),
            session.latest_search,
        )

    # -- internals --------------------------------------------------------

    def _draw_us(self, dist) -> int:
        return 0 if dist is None else us(dist.sample())

    def _purpose(self, session: DialogueSession) -> Purpose:
        return Purpose.QA if session.phase is DialoguePhase.QA else Purpose.RESPOND

    def _context(self, session: DialogueSession) -> str:
        for utt in reversed(session.transcript):
            if utt.speaker is Speaker.SYSTEM:
                return "Assistant previously said: " + utt.text
        return ""

    async def _respond(self, session, turn_id, plan, user_text, trace, t_start):
        """Backend call plus injected latency; records the Respond span."""
        k = self.kernel
        prompt = build_respond_prompt(plan.action, user_text, self._context(session))
        request = BackendRequest(self._purpose(session), prompt, session.session_id, turn_id)
        draw = self._draw_us(self.latency.respond)
        try:
            response = await k.call_blocking(lambda: self.backend.complete(request))
        except Exception as exc:
            raise TurnAbortedError(
                "reply generation failed for turn %d: %s" % (turn_id, exc)
            ) from exc
        await k.sleep_us(draw + us(response.latency_injected))
        t_end = k.now_us()
        self._add_span(session, trace, TaskKind.RESPOND, t_start, t_end)
        return response.text, t_end

    async def _respond_with_fanout(self, session, turn_id, plan, user_text, trace, t_fan):
        """Run path A inline and spawn path B at the same virtual instant."""
        k = self.kernel
        prompt = build_respond_prompt(plan.action, user_text, self._context(session))
        request = BackendRequest(self._purpose(session), prompt, session.session_id, turn_id)
        draw = self._draw_us(self.latency.respond)
        try:
            response = await k.call_blocking(lambda: self.backend.complete(request))
        except Exception as exc:
            raise TurnAbortedError(
                "reply generation failed for turn %d: %s" % (turn_id, exc)
            ) from exc
        session.pending_b = k.spawn(
            self._run_path_b(session, turn_id, user_text, trace),
            name="pathB-%s-%d" % (session.session_id, turn_id),
        )
        await k.sleep_us(draw + us(response.latency_injected))
        t_end = k.now_us()
        self._add_span(session, trace, TaskKind.RESPOND, t_fan, t_end)
        return response.text, t_end

    async def _run_path_b(self, session, turn_id, user_text, trace):
        """NLU -> DST commit -> search, appending spans to the launch turn."""
        k = self.kernel
        t0 = k.now_us()
        try:
            nlu_draw = self._draw_us(self.latency.nlu)
            extract = await k.call_blocking(
                lambda: extract_slots(
                    user_text, self.vocab, self.backend, self.budget,
                    session.session_id, turn_id,
                )
            )
            await k.sleep_us(nlu_draw + us(extract.latency_injected))
            t1 = k.now_us()
            self._add_span(session, trace, TaskKind.NLU, t0, t1)
            if extract.degraded:
                logger.warning(
                    "path B degraded on turn %d; dialogue state unchanged", turn_id
                )
                return
            self.dst.commit(session.session_id, extract.slots, turn_id)
            self._add_span(session, trace, TaskKind.DST_COMMIT, t1, k.now_us())
            await k.sleep_us(self._draw_us(self.latency.search))
            dst_now = self.dst.get_snapshot(session.session_id)
            ranked = search(
                self.catalog, dst_now, PRESENT_K,
                exclude=frozenset(session.scenario.presented_ever),
            )
            t2 = k.now_us()
            self._add_span(session, trace, TaskKind.SEARCH, t1, t2)
            self._note_search(session, ranked)
        except Exception:
            logger.exception("path B failed on turn %d; reply unaffected", turn_id)

    def _note_search(self, session: DialogueSession, ranked: RankedSpots) -> None:
        latest = session.latest_search
        if latest is None or ranked.dst_version >= latest.dst_version:
            session.latest_search = ranked

    async def _speak_and_close_turn(self, session, trace, utterance, plan: TurnPlan):
        k = self.kernel
        self._emit(
            session, "system_utterance", trace.turn_id,
            {"text": utterance.text, "stale": trace.stale},
        )
        self._emit_action_events(session, trace.turn_id, plan)
        t_start = k.now_us()
        duration_us = _speech_us(utterance.text, self.timing)
        self._add_span(session, trace, TaskKind.SPEAK, t_start, t_start + duration_us)
        self._emit(
            session, "speaking_started", trace.turn_id,
            {"duration": float(sec3(duration_us))},
        )
        await k.sleep_us(duration_us)
        session.traces.append(trace)
        self._flush_spans(session)
        self._emit(session, "speaking_finished", trace.turn_id, {})
        if plan.phases:
            self._emit(
                session, "phase_change", trace.turn_id,
                {"phase": session.scenario.phase.value},
            )

    def _emit_action_events(self, session, turn_id: int, plan: TurnPlan) -> None:
        action = plan.action
        if isinstance(action, PresentAction):
            self._emit(
                session, "candidates", turn_id,
                {
                    "cards": [
                        {
                            "spot_id": c.spot_id,
                            "name": c.name,
                            "description": c.description,
                            "matched": list(c.matched),
                            "score": c.score,
                        }
                        for c in action.cards
                    ]
                },
            )
        elif isinstance(action, RouteAction):
            self._emit(
                session, "route", turn_id,
                {
                    "summary": action.summary,
                    "legs": [
                        {
                            "from_name": self.catalog.get(leg.from_spot_id).name,
                            "to_name": self.catalog.get(leg.to_spot_id).name,
                            "mode": leg.mode.value,
                            "duration_min": leg.duration_min,
                        }
                        for leg in action.plan.legs
                    ],
                },
            )

    def _add_span(self, session, trace: TurnTrace, kind: TaskKind, start: int, end: int):
        span = Span(kind, start, end)
        trace.spans.append(span)
        if self.emit is not None:
            session.unstreamed.append((trace.turn_id, span))

    def _flush_spans(self, session: DialogueSession) -> None:
        if self.emit is None:
            return
        pending, session.unstreamed = session.unstreamed, []
        for turn_id, span in pending:
            self._emit(
                session, "trace_span", turn_id,
                {
                    "task": span.task.value,
                    "start": float(sec3(span.start_us)),
                    "end": float(sec3(span.end_us)),
                },
            )

    def _emit(self, session: DialogueSession, type_: str, turn_id: int, payload: dict):
        if self.emit is not None:
            self.emit(
                session.session_id,
                {"type": type_, "turn_id": turn_id, "payload": payload},
            )


# -- trace export and checking ------------------------------------------------


def trace_to_json_line(trace: TurnTrace) -> str:
    """One export record; times in seconds with exactly three decimals."""
    spans = ", ".join(
        '{"task": "%s", "start": %s, "end": %s}'
        % (s.task.value, sec3(s.start_us), sec3(s.end_us))
        for s in trace.spans
    )
    return '{"turn_id": %d, "spans": [%s], "dst_version_used": %d}' % (
        trace.turn_id, spans, trace.dst_version_used,
    )


def export_traces(traces: list[TurnTrace]) -> str:
    return "".join(trace_to_json_line(t) + "\n" for t in traces)


def validate_trace(trace: TurnTrace) -> None:
    """Check the structural span invariants; raises TraceInvariantError.

    The fan-out simultaneity check applies to dual-path turns, recognized
    by the presence of a BarrierWait span; sequential-baseline traces have
    none and are exempt by construction.
    """
    for span in trace.spans:
        if span.end_us < span.start_us:
            raise TraceInvariantError(
                "turn %d: %s ends before start" % (trace.turn_id, span.task.value)
            )
    respond = trace.span(TaskKind.RESPOND)
    nlu = trace.span(TaskKind.NLU)
    commit = trace.span(TaskKind.DST_COMMIT)
    srch = trace.span(TaskKind.SEARCH)
    if trace.span(TaskKind.BARRIER_WAIT) is not None and respond and nlu:
        if respond.start_us != nlu.start_us:
            raise TraceInvariantError(
                "turn %d: fan-out not simultaneous (Respond %d vs Nlu %d)"
                % (trace.turn_id, respond.start_us, nlu.start_us)
            )
    if nlu and commit and commit.start_us < nlu.end_us:
        raise TraceInvariantError("turn %d: commit before NLU end" % trace.turn_id)
    if commit and srch and srch.start_us < commit.end_us:
        raise TraceInvariantError("turn %d: search before commit end" % trace.turn_id)
