/** Per-turn task timeline: two lanes showing how work overlaps in time.
 *
 * Lane A holds the user-facing path (respond, speak); lane B holds the
 * understanding path (interpret, state commit, search, barrier wait).
 * Bars are positioned as percentages of the turn's own span, so a long
 * speech and a short search stay readable side by side.
 */

import { escapeHtml, sec3 } from "./html.js";
import type { Lane, SpanView, TaskName, TurnTraceView, UiTurnView } from "./types.js";

const LANES: Record<TaskName, Lane> = {
  Respond: "A",
  Speak: "A",
  Nlu: "B",
  DstCommit: "B",
  Search: "B",
  BarrierWait: "B",
};

export function laneFor(task: TaskName): Lane {
  return LANES[task];
}

export interface LaneSpan extends SpanView {
  lane: Lane;
}

export interface TimelineTurn {
  turnId: number;
  dstVersionUsed: number;
  start: number;
  end: number;
  spans: LaneSpan[];
}

/** Attach lanes and turn extents to raw trace rows. */
export function buildTurnViews(traces: TurnTraceView[]): TimelineTurn[] {
  return traces.map((trace) => {
    const spans = trace.spans.map((s) => ({ ...s, lane: laneFor(s.task) }));
    const start = Math.min(...spans.map((s) => s.start));
    const end = Math.max(...spans.map((s) => s.end));
    return {
      turnId: trace.turn_id,
      dstVersionUsed: trace.dst_version_used,
      start,
      end,
      spans,
    };
  });
}

function pct(value: number, start: number, width: number): string {
  if (width <= 0) {
    return "0.00";
  }
  return (((value - start) / width) * 100).toFixed(2);
}

function renderSpan(span: LaneSpan, start: number, width: number): string {
  const left = pct(span.start, start, width);
  const right = pct(span.end, start, width);
  const w = (Number(right) - Number(left)).toFixed(2);
  const title = `${span.task} ${sec3(span.start)} to ${sec3(span.end)} s`;
  return (
    `<div class="bar task-${span.task.toLowerCase()}" title="${escapeHtml(title)}" ` +
    `style="left:${left}%;width:${w}%"></div>`
  );
}

function renderTurn(turn: TimelineTurn): string {
  const width = turn.end - turn.start;
  const lane = (name: Lane): string =>
    turn.spans
      .filter((s) => s.lane === name)
      .map((s) => renderSpan(s, turn.start, width))
      .join("");
  return (
    `<div class="turn" data-turn="${turn.turnId}" data-dst-version="${turn.dstVersionUsed}">` +
    `<h3>Turn ${turn.turnId}</h3>` +
    `<div class="lane lane-a" data-lane="A">${lane("A")}</div>` +
    `<div class="lane lane-b" data-lane="B">${lane("B")}</div>` +
    `</div>`
  );
}

/** Timeline markup for a list of turn traces. */
export function renderTimeline(traces: TurnTraceView[]): string {
  if (traces.length === 0) {
    return `<section class="timeline"><p class="empty">No turns yet.</p></section>`;
  }
  const body = buildTurnViews(traces).map(renderTurn).join("\n");
  return `<section class="timeline">\n${body}\n</section>`;
}
