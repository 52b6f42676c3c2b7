"""HTTP/WebSocket gateway around the dialogue engine.

The service owns one engine on the asyncio kernel. Turns for a session are
serialized through a per-session FIFO lock held until speech playback ends,
so stream events of different turns can never interleave. Every emitted
event is also buffered per session; a stream that attaches late (or
reconnects) first receives the full backlog, which makes transcript replay
idempotent for the UI.
"""

from __future__ import annotations

import asyncio
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field

from ..backends import HttpBackend, MockBackend, ScriptedBackend
from ..clock import AsyncioKernel
from ..nlu import PromptBudget
from ..orchestrator import (
    BarrierPolicy,
    DialogueEngine,
    LatencyProfile,
    SessionEndedError,
    SpeechTimingModel,
    TurnAbortedError,
    export_traces,
)
from ..rtdb import SpotCatalog
from ..sim import default_catalog

logger = logging.getLogger(__name__)


class UtteranceIn(BaseModel):
    text: str = Field(min_length=1)


class UtteranceOut(BaseModel):
    turn_id: int
    reply: str
    phase: str
    stale: bool


class SessionOut(BaseModel):
    session_id: str
    phase: str


class StateOut(BaseModel):
    session_id: str
    version: int
    slots: dict[str, list[str]]


def build_backend(name: str, script_path: str | None = None,
                  base_url: str = "", model: str = ""):
    if name == "mock":
        return MockBackend()
    if name == "scripted":
        if not script_path:
            raise ValueError("scripted backend needs a script file")
        return ScriptedBackend.from_file(script_path)
    if name == "http":
        if not base_url or not model:
            raise ValueError("http backend needs base_url and model")
        return HttpBackend(base_url, model)
    raise ValueError("unknown backend %r" % name)


class SessionChannel:
    """Event backlog plus live subscriber queues for one session."""

    def __init__(self):
        self.backlog: list[dict] = []
        self.subscribers: list[asyncio.Queue] = []
        self.lock = asyncio.Lock()

    def publish(self, event: dict) -> None:
        self.backlog.append(event)
        for queue in self.subscribers:
            queue.put_nowait(event)

    def subscribe(self) -> asyncio.Queue:
        queue: asyncio.Queue = asyncio.Queue()
        for event in self.backlog:
            queue.put_nowait(event)
        self.subscribers.append(queue)
        return queue

    def unsubscribe(self, queue: asyncio.Queue) -> None:
        if queue in self.subscribers:
            self.subscribers.remove(queue)


def create_app(
    catalog: SpotCatalog | None = None,
    backend=None,
    timing: SpeechTimingModel | None = None,
    barrier: BarrierPolicy | None = None,
    budget: PromptBudget | None = None,
    latency: LatencyProfile | None = None,
) -> FastAPI:
    channels: dict[str, SessionChannel] = {}

    def emit(session_id: str, event: dict) -> None:
        channel = channels.get(session_id)
        if channel is not None:
            channel.publish(event)

    state: dict = {}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        # Kernel construction needs a running loop for its time origin.
        state["engine"] = DialogueEngine(
            AsyncioKernel(),
            backend if backend is not None else MockBackend(),
            catalog if catalog is not None else default_catalog(),
            timing=timing,
            barrier=barrier,
            budget=budget,
            latency=latency,
            emit=emit,
        )
        yield

    app = FastAPI(title="asyncdial gateway", lifespan=lifespan)

    def engine() -> DialogueEngine:
        return state["engine"]

    def get_session(session_id: str):
        try:
            return engine().get_session(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    async def ensure_started(session) -> None:
        channel = channels[session.session_id]
        async with channel.lock:
            if not session.started:
                await engine().start_session(session)

    @app.post("/api/sessions", response_model=SessionOut, status_code=201)
    async def create_session():
        session = engine().create_session()
        channels[session.session_id] = SessionChannel()
        return SessionOut(
            session_id=session.session_id, phase=session.phase.value
        )

    @app.post(
        "/api/sessions/{session_id}/utterances", response_model=UtteranceOut
    )
    async def post_utterance(session_id: str, body: UtteranceIn):
        session = get_session(session_id)
        channel = channels[session_id]
        await ensure_started(session)
        async with channel.lock:
            try:
                utterance, trace = await engine().run_turn(session, body.text)
            except SessionEndedError:
                raise HTTPException(
                    status_code=409, detail="dialogue already ended"
                )
            except TurnAbortedError as exc:
                raise HTTPException(status_code=502, detail=str(exc))
        return UtteranceOut(
            turn_id=utterance.turn_id,
            reply=utterance.text,
            phase=session.phase.value,
            stale=trace.stale,
        )

    @app.get("/api/sessions/{session_id}/trace")
    async def get_trace(session_id: str):
        session = get_session(session_id)
        return {
            "session_id": session_id,
            "traces": [
                {
                    "turn_id": t.turn_id,
                    "dst_version_used": t.dst_version_used,
                    "stale": t.stale,
                    "spans": [
                        {
                            "task": s.task.value,
                            "start": s.start_us / 1_000_000,
                            "end": s.end_us / 1_000_000,
                        }
                        for s in t.spans
                    ],
                }
                for t in session.traces
            ],
            "export": export_traces(session.traces),
        }

    @app.get("/api/sessions/{session_id}/state", response_model=StateOut)
    async def get_state(session_id: str):
        get_session(session_id)
        snapshot = engine().dst.get_snapshot(session_id)
        return StateOut(
            session_id=session_id,
            version=snapshot.version,
            slots={cat: sorted(vals) for cat, vals in snapshot.slots.items()},
        )

    @app.websocket("/api/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        try:
            session = engine().get_session(session_id)
        except KeyError:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        channel = channels[session_id]
        queue = channel.subscribe()
        try:
            await ensure_started(session)
            while True:
                event = await queue.get()
                await websocket.send_json(event)
        except WebSocketDisconnect:
            pass
        finally:
            channel.unsubscribe(queue)

    return app
