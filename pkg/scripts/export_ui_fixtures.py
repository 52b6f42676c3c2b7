"""Record gateway-shaped event logs and trace files for the UI tests.

The browser client is tested against real engine output, not hand-written
samples. This script replays the packaged persona scripts on the virtual
clock with a stream collector attached and writes:

* events_happy.json / events_stale.json - the full per-session event log,
  exactly as the WebSocket stream would deliver it;
* traces_async.json / traces_sync.json - per-turn spans in seconds for the
  timeline pane (fixed-latency happy persona, both execution modes).

Run from the repo root:  python scripts/export_ui_fixtures.py
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from asyncdial.clock import VirtualKernel, us  # noqa: E402
from asyncdial.backends import MockBackend  # noqa: E402
from asyncdial.orchestrator import DialogueEngine  # noqa: E402
from asyncdial.sim import build_profile, default_catalog, script_from_dict  # noqa: E402

OUT_DIR = os.path.join(
    os.path.dirname(__file__), "..", "frontend", "test", "fixtures"
)


def load_persona(name):
    path = os.path.join(
        os.path.dirname(__file__), "..", "src", "asyncdial", "data",
        "persona_%s.json" % name,
    )
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def record(persona_name, mode):
    """Replay one persona; returns (events, traces)."""
    script = script_from_dict(load_persona(persona_name))
    events = []
    kernel = VirtualKernel()
    engine = DialogueEngine(
        kernel,
        MockBackend(),
        default_catalog(),
        timing=script.timing,
        barrier=script.barrier,
        latency=build_profile(script),
        emit=lambda sid, event: events.append(event),
    )
    session = engine.create_session("fixture-%s-%s" % (persona_name, mode))
    gap_us = us(script.timing.user_gap_seconds)

    async def drive():
        await engine.start_session(session)
        for text in script.utterances:
            await kernel.sleep_us(gap_us)
            if mode == "async":
                await engine.run_turn(session, text)
            else:
                await engine.run_turn_sequential(session, text)
        if session.pending_b is not None:
            await kernel.wait_for(session.pending_b.done_event, None)

    kernel.run(drive())
    traces = [
        {
            "turn_id": t.turn_id,
            "stale": t.stale,
            "dst_version_used": t.dst_version_used,
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
    ]
    return events, traces


def write(name, payload):
    path = os.path.join(OUT_DIR, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    print("wrote %s (%d entries)" % (path, len(payload)))


def main():
    os.makedirs(OUT_DIR, exist_ok=True)

    happy_events, happy_traces = record("happy", "async")
    write("events_happy.json", happy_events)
    write("traces_async.json", happy_traces)

    stale_events, _ = record("stale", "async")
    write("events_stale.json", stale_events)

    _, sync_traces = record("happy", "sync")
    write("traces_sync.json", sync_traces)

    stale_count = sum(
        1
        for e in stale_events
        if e["type"] == "system_utterance" and e["payload"].get("stale")
    )
    assert stale_count == 2, "expected two stale turns in the stale fixture"
    assert any(e["type"] == "candidates" for e in happy_events)
    assert any(e["type"] == "route" for e in happy_events)


if __name__ == "__main__":
    main()
