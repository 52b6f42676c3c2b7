"""Virtual-clock dialogue simulation: measure what the user actually waits.

A persona script fixes the user's lines, the injected latencies, and the
speech timing. ``run_simulation`` replays it through the real engine on the
deterministic kernel, in either the dual-path mode or the sequential
baseline, and reports the perceived gap of every turn. ``compare_modes``
replays the same script through both modes with paired latency draws, so
the per-turn difference is exactly the hidden time.

Latency draws are seeded per purpose from the script seed, and each run
builds its own fresh streams; the async and sync runs of one comparison
therefore see identical draw sequences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .backends import Fixed, MockBackend, Uniform
from .clock import VirtualKernel, sec3, us
from .orchestrator import (
    BarrierPolicy,
    DialogueEngine,
    LatencyProfile,
    SpeechTimingModel,
)
from .rtdb import SpotCatalog, ingest_catalog
from .scenario import DialoguePhase

MODES = ("async", "sync")

_PURPOSES = ("respond", "nlu", "search")


class ScriptError(ValueError):
    """The persona script file is malformed."""


class SimulationIncompleteError(RuntimeError):
    """The script ran out of utterances before the dialogue finished."""

    def __init__(self, phase: DialoguePhase):
        super().__init__(
            "script exhausted while the dialogue was still in phase %s; "
            "it must reach End" % phase.value
        )
        self.phase = phase


@dataclass(frozen=True)
class PersonaScript:
    name: str
    utterances: tuple[str, ...]
    latency_config: dict
    timing: SpeechTimingModel
    seed: int
    barrier: BarrierPolicy

    def __post_init__(self):
        if not self.utterances:
            raise ScriptError("a persona script needs at least one utterance")
        for purpose in self.latency_config:
            if purpose not in _PURPOSES:
                raise ScriptError("unknown latency purpose %r" % purpose)


def _parse_distribution(spec: dict | None):
    """Return a factory so each run gets its own seeded stream."""
    if spec is None:
        return lambda seed_key: None
    kind = spec.get("kind")
    if kind == "fixed":
        seconds = float(spec["seconds"])
        return lambda seed_key: Fixed(seconds)
    if kind == "uniform":
        lo, hi = float(spec["lo"]), float(spec["hi"])
        return lambda seed_key: Uniform(lo, hi, seed=seed_key)
    raise ScriptError("unknown latency kind %r" % kind)


def load_script(path: str) -> PersonaScript:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScriptError("persona script is not valid JSON: %s" % exc) from exc
    return script_from_dict(data)


def script_from_dict(data: dict) -> PersonaScript:
    try:
        name = data["name"]
        utterances = tuple(data["utterances"])
    except KeyError as exc:
        raise ScriptError("persona script missing field %s" % exc) from exc
    timing_cfg = data.get("timing", {})
    timing = SpeechTimingModel(
        chars_per_second=float(timing_cfg.get("chars_per_second", 8.0)),
        user_gap_seconds=float(timing_cfg.get("user_gap_seconds", 1.0)),
    )
    barrier_cfg = data.get("barrier", {})
    barrier = BarrierPolicy(
        grace_timeout_seconds=float(barrier_cfg.get("grace_timeout_seconds", 2.0))
    )
    latency = dict(data.get("latency_config", {}))
    for spec in latency.values():
        _parse_distribution(spec)  # validate early
    return PersonaScript(
        name=name,
        utterances=utterances,
        latency_config=latency,
        timing=timing,
        seed=int(data.get("seed", 0)),
        barrier=barrier,
    )


def build_profile(script: PersonaScript) -> LatencyProfile:
    """Fresh per-purpose latency streams for one simulation run."""
    dists = {}
    for purpose in _PURPOSES:
        factory = _parse_distribution(script.latency_config.get(purpose))
        dists[purpose] = factory("%d:%s" % (script.seed, purpose))
    return LatencyProfile(**dists)


@dataclass(frozen=True)
class TurnReportRow:
    turn_id: int
    gap_us: int
    barrier_wait_us: int
    stale: bool


@dataclass(frozen=True)
class SimReport:
    mode: str
    script_name: str
    per_turn: tuple[TurnReportRow, ...]

    @property
    def total_gap_us(self) -> int:
        return sum(row.gap_us for row in self.per_turn)

    @property
    def mean_gap(self) -> float:
        return self.total_gap_us / len(self.per_turn) / 1_000_000

    @property
    def mean_gap_us(self) -> int:
        return round(self.total_gap_us / len(self.per_turn))

    def gaps(self) -> list[float]:
        return [row.gap_us / 1_000_000 for row in self.per_turn]


_default_catalog: SpotCatalog | None = None


def default_catalog() -> SpotCatalog:
    """The packaged fictional-city catalog used by the demo scenario."""
    global _default_catalog
    if _default_catalog is None:
        source = resources.files("asyncdial").joinpath(
            "data", "spots_kawamachi.jsonl"
        )
        with resources.as_file(source) as path:
            _default_catalog = ingest_catalog(str(path))
    return _default_catalog


def run_session(
    script: PersonaScript, mode: str, catalog: SpotCatalog | None = None
):
    """Replay the script through a fresh engine; returns the full session.

    The session carries every trace and the complete transcript, which is
    what invariant checks want; ``run_simulation`` reduces it to a report.
    """
    if mode not in MODES:
        raise ValueError("mode must be one of %r" % (MODES,))
    catalog = catalog or default_catalog()
    kernel = VirtualKernel()
    engine = DialogueEngine(
        kernel,
        MockBackend(),
        catalog,
        timing=script.timing,
        barrier=script.barrier,
        latency=build_profile(script),
    )
    session = engine.create_session("sim")
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

    kernel.run(drive(), name="sim-%s-%s" % (script.name, mode))
    if session.phase is not DialoguePhase.END:
        raise SimulationIncompleteError(session.phase)
    return session


def run_simulation(
    script: PersonaScript, mode: str, catalog: SpotCatalog | None = None
) -> SimReport:
    """Replay the script and report the per-turn perceived gaps."""
    session = run_session(script, mode, catalog)
    rows = tuple(
        TurnReportRow(
            turn_id=trace.turn_id,
            gap_us=trace.gap_us(),
            barrier_wait_us=trace.barrier_wait_us(),
            stale=trace.stale,
        )
        for trace in session.traces
        if trace.turn_id >= 1
    )
    return SimReport(mode=mode, script_name=script.name, per_turn=rows)


@dataclass(frozen=True)
class ComparisonRow:
    turn_id: int
    gap_async_us: int
    gap_sync_us: int

    @property
    def delta_us(self) -> int:
        return self.gap_sync_us - self.gap_async_us


@dataclass(frozen=True)
class ComparisonReport:
    script_name: str
    async_report: SimReport
    sync_report: SimReport
    per_turn: tuple[ComparisonRow, ...]

    @property
    def mean_async(self) -> float:
        return self.async_report.mean_gap

    @property
    def mean_sync(self) -> float:
        return self.sync_report.mean_gap

    @property
    def mean_delta(self) -> float:
        return (
            (self.sync_report.total_gap_us - self.async_report.total_gap_us)
            / len(self.per_turn)
            / 1_000_000
        )


def compare_modes(
    script: PersonaScript, catalog: SpotCatalog | None = None
) -> ComparisonReport:
    """Run both modes with paired draws; async must not be slower on average."""
    report_async = run_simulation(script, "async", catalog)
    report_sync = run_simulation(script, "sync", catalog)
    rows = tuple(
        ComparisonRow(a.turn_id, a.gap_us, s.gap_us)
        for a, s in zip(report_async.per_turn, report_sync.per_turn, strict=True)
    )
    report = ComparisonReport(script.name, report_async, report_sync, rows)
    if report.async_report.total_gap_us > report.sync_report.total_gap_us:
        raise AssertionError(
            "async mode came out slower than the sequential baseline "
            "(%s vs %s s mean gap)" % (sec3(report_async.mean_gap_us),
                                       sec3(report_sync.mean_gap_us))
        )
    return report


# -- byte-stable report rendering ---------------------------------------------


def render_sim_report(report: SimReport) -> str:
    """JSON with fixed key order and 3-decimal seconds; byte-stable."""
    lines = []
    lines.append("{")
    lines.append('  "mode": "%s",' % report.mode)
    lines.append('  "script": "%s",' % report.script_name)
    lines.append('  "per_turn": [')
    for i, row in enumerate(report.per_turn):
        comma = "," if i + 1 < len(report.per_turn) else ""
        lines.append(
            '    {"turn_id": %d, "perceived_gap": %s, "barrier_wait": %s, '
            '"stale": %s}%s'
            % (
                row.turn_id,
                sec3(row.gap_us),
                sec3(row.barrier_wait_us),
                "true" if row.stale else "false",
                comma,
            )
        )
    lines.append("  ],")
    lines.append('  "mean_gap": %s' % sec3(report.mean_gap_us))
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_comparison(report: ComparisonReport) -> str:
    lines = []
    lines.append("{")
    lines.append('  "script": "%s",' % report.script_name)
    lines.append('  "per_turn": [')
    for i, row in enumerate(report.per_turn):
        comma = "," if i + 1 < len(report.per_turn) else ""
        lines.append(
            '    {"turn_id": %d, "gap_async": %s, "gap_sync": %s, "delta": %s}%s'
            % (
                row.turn_id,
                sec3(row.gap_async_us),
                sec3(row.gap_sync_us),
                sec3(row.delta_us),
                comma,
            )
        )
    lines.append("  ],")
    lines.append('  "mean_async": %s,' % sec3(report.async_report.mean_gap_us))
    lines.append('  "mean_sync": %s,' % sec3(report.sync_report.mean_gap_us))
    lines.append(
        '  "mean_delta": %s'
        % sec3(report.sync_report.mean_gap_us - report.async_report.mean_gap_us)
    )
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_report(report, path: str) -> None:
    if isinstance(report, ComparisonReport):
        text = render_comparison(report)
    else:
        text = render_sim_report(report)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
