/** Chat transcript rendering: a pure fold over the session event stream.
 *
 * The transcript holds no dialogue logic of its own; every phase banner,
 * card panel and badge comes straight from gateway events, so replaying a
 * recorded log always reproduces the identical markup.
 */

import { escapeHtml, sec3 } from "./html.js";
import type { RouteLegView, SpotCard, StreamEvent } from "./types.js";

export type TranscriptItem =
  | { kind: "user"; turnId: number; text: string }
  | { kind: "system"; turnId: number; text: string; stale: boolean }
  | { kind: "speaking"; turnId: number; seconds: number }
  | { kind: "cards"; turnId: number; cards: SpotCard[] }
  | { kind: "route"; turnId: number; summary: string; legs: RouteLegView[] }
  | { kind: "phase"; turnId: number; phase: string };

/** Events that contribute to the transcript, in stream order. */
export function foldTranscript(events: StreamEvent[]): TranscriptItem[] {
  const items: TranscriptItem[] = [];
  for (const event of events) {
    const p = event.payload;
    switch (event.type) {
      case "user_echo":
        items.push({ kind: "user", turnId: event.turn_id, text: String(p.text) });
        break;
      case "system_utterance":
        items.push({
          kind: "system",
          turnId: event.turn_id,
          text: String(p.text),
          stale: Boolean(p.stale),
        });
        break;
      case "speaking_started":
        items.push({
          kind: "speaking",
          turnId: event.turn_id,
          seconds: Number(p.duration),
        });
        break;
      case "candidates":
        items.push({
          kind: "cards",
          turnId: event.turn_id,
          cards: p.cards as SpotCard[],
        });
        break;
      case "route":
        items.push({
          kind: "route",
          turnId: event.turn_id,
          summary: String(p.summary),
          legs: p.legs as RouteLegView[],
        });
        break;
      case "phase_change":
        items.push({
          kind: "phase",
          turnId: event.turn_id,
          phase: String(p.phase),
        });
        break;
      default:
        // trace_span and speaking_finished feed the timeline pane instead
        break;
    }
  }
  return items;
}

export const STALE_BADGE = "using previous understanding";

function renderItem(item: TranscriptItem): string {
  switch (item.kind) {
    case "user":
      return `<div class="msg user" data-turn="${item.turnId}">${escapeHtml(item.text)}</div>`;
    case "system": {
      const badge = item.stale
        ? `<span class="badge stale">${STALE_BADGE}</span>`
        : "";
      return `<div class="msg system" data-turn="${item.turnId}">${badge}${escapeHtml(item.text)}</div>`;
    }
    case "speaking":
      return `<div class="speaking" data-turn="${item.turnId}">speaking for ${sec3(item.seconds)} s</div>`;
    case "cards": {
      const cards = item.cards
        .map(
          (card, i) =>
            `<li class="card" data-spot="${escapeHtml(card.spot_id)}">` +
            `<span class="num">${i + 1}</span> ` +
            `<span class="name">${escapeHtml(card.name)}</span> ` +
            `<span class="desc">${escapeHtml(card.description)}</span> ` +
            `<span class="matched">${escapeHtml(card.matched.join(", "))}</span>` +
            `</li>`,
        )
        .join("");
      return `<ul class="cards" data-turn="${item.turnId}">${cards}</ul>`;
    }
    case "route": {
      const legs = item.legs
        .map(
          (leg) =>
            `<li class="leg">${escapeHtml(leg.from_name)} to ${escapeHtml(leg.to_name)} ` +
            `(${escapeHtml(leg.mode)}, ${leg.duration_min} min)</li>`,
        )
        .join("");
      return (
        `<div class="route" data-turn="${item.turnId}">` +
        `<p>${escapeHtml(item.summary)}</p><ul>${legs}</ul></div>`
      );
    }
    case "phase":
      return `<div class="phase-banner" data-turn="${item.turnId}">${escapeHtml(item.phase)}</div>`;
  }
}

/** Full transcript markup for an event log; same log, same bytes. */
export function renderTranscript(events: StreamEvent[]): string {
  const body = foldTranscript(events).map(renderItem).join("\n");
  return `<section class="transcript">\n${body}\n</section>`;
}
