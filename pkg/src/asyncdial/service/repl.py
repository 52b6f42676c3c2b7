"""Terminal REPL: the same engine the gateway serves, minus the transport."""

from __future__ import annotations

import asyncio

from ..clock import AsyncioKernel
from ..orchestrator import (
    DialogueEngine,
    SessionEndedError,
    SpeechTimingModel,
    TurnAbortedError,
)
from ..rtdb import SpotCatalog
from ..scenario import DialoguePhase
from ..sim import default_catalog

# Large speaking rate collapses simulated speech pauses to near zero.
FAST_TIMING = SpeechTimingModel(chars_per_second=1_000_000.0)


async def _repl(backend, catalog: SpotCatalog, realtime: bool) -> None:
    engine = DialogueEngine(
        AsyncioKernel(),
        backend,
        catalog,
        timing=SpeechTimingModel() if realtime else FAST_TIMING,
    )
    session = engine.create_session()
    utterance, _ = await engine.start_session(session)
    print("system> %s" % utterance.text)
    while session.phase is not DialoguePhase.END:
        try:
            text = (await asyncio.to_thread(input, "you> ")).strip()
        except EOFError:
            break
        if not text:
            continue
        if text in ("/quit", "/exit"):
            break
        try:
            utterance, trace = await engine.run_turn(session, text)
        except SessionEndedError:
            break
        except TurnAbortedError as exc:
            print("error> %s" % exc)
            continue
        marker = " [stale]" if trace.stale else ""
        print("system>%s %s" % (marker, utterance.text))
    print("(dialogue over, phase %s)" % session.phase.value)


def run_repl(backend, catalog: SpotCatalog | None = None, realtime: bool = False):
    asyncio.run(_repl(backend, catalog or default_catalog(), realtime))
