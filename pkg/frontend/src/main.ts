/** Browser bootstrap: wires the pure renderers to a live gateway session.
 *
 * All rendering is replay-from-scratch: events accumulate in an array and
 * every update re-renders the whole transcript from it.  A reconnect just
 * clears the array (the gateway resends the backlog) and the page converges
 * to the same markup.
 */

import { GatewayClient } from "./client.js";
import { CardSelection, renderCards } from "./selection.js";
import { renderTimeline } from "./timeline.js";
import { renderTranscript } from "./transcript.js";
import type { SpotCard, StreamEvent } from "./types.js";

function mustFind(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing #${id}`);
  }
  return el;
}

async function boot(): Promise<void> {
  const client = new GatewayClient(window.location.origin);
  const transcriptEl = mustFind("transcript");
  const timelineEl = mustFind("timeline");
  const chooserEl = mustFind("chooser");
  const form = mustFind("say") as HTMLFormElement;
  const input = mustFind("text") as HTMLInputElement;

  const session = await client.createSession();
  const events: StreamEvent[] = [];
  let selection: CardSelection | null = null;
  let cards: SpotCard[] = [];

  const redraw = (): void => {
    transcriptEl.innerHTML = renderTranscript(events);
    transcriptEl.scrollTop = transcriptEl.scrollHeight;
  };

  const redrawChooser = (): void => {
    chooserEl.innerHTML = selection ? renderCards(cards, selection) : "";
  };

  const refreshTimeline = async (): Promise<void> => {
    const trace = await client.getTrace(session.session_id);
    timelineEl.innerHTML = renderTimeline(trace.traces);
  };

  const say = async (text: string): Promise<void> => {
    selection = null;
    redrawChooser();
    await client.postUtterance(session.session_id, text);
    await refreshTimeline();
  };

  client.openStream(
    session.session_id,
    (event) => {
      events.push(event);
      if (event.type === "candidates") {
        cards = event.payload.cards as SpotCard[];
        selection = new CardSelection(cards);
        redrawChooser();
      }
      redraw();
    },
    () => {
      events.length = 0;
      redraw();
    },
  );

  chooserEl.addEventListener("click", (ev) => {
    if (!selection) {
      return;
    }
    const target = ev.target as HTMLElement;
    if (target.matches("button.submit-choice") && selection.canSubmit()) {
      void say(selection.submit());
      return;
    }
    const spot = target.closest("[data-spot]") as HTMLElement | null;
    if (spot && spot.dataset.spot) {
      selection.toggle(spot.dataset.spot);
      redrawChooser();
    }
  });

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const text = input.value.trim();
    if (!text) {
      return;
    }
    input.value = "";
    void say(text);
  });

  await refreshTimeline();
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => {
    void boot();
  });
}
