/** Card picking for the Choose phase: exactly two spots, enforced locally.
 *
 * The dialogue service re-validates the choice, but the UI never offers an
 * invalid submit in the first place: the button stays disabled until the
 * count is exactly two, and a third click is ignored rather than queued.
 */

import { escapeHtml } from "./html.js";
import type { SpotCard } from "./types.js";

export class SelectionError extends Error {}

export class CardSelection {
  private readonly order: string[];
  private readonly picked = new Set<string>();

  constructor(cards: SpotCard[]) {
    this.order = cards.map((c) => c.spot_id);
    if (new Set(this.order).size !== this.order.length) {
      throw new SelectionError("duplicate spot ids in card list");
    }
  }

  /** Toggle a card; picking a third while two are set is a no-op. */
  toggle(spotId: string): boolean {
    if (!this.order.includes(spotId)) {
      throw new SelectionError(`unknown spot id: ${spotId}`);
    }
    if (this.picked.has(spotId)) {
      this.picked.delete(spotId);
      return false;
    }
    if (this.picked.size >= 2) {
      return false;
    }
    this.picked.add(spotId);
    return true;
  }

  /** Picked ids in presentation order, not click order. */
  selected(): string[] {
    return this.order.filter((id) => this.picked.has(id));
  }

  canSubmit(): boolean {
    return this.picked.size === 2;
  }

  /** The utterance to post: 1-based option numbers, e.g. "1 and 3". */
  submit(): string {
    if (!this.canSubmit()) {
      throw new SelectionError("pick exactly two spots before submitting");
    }
    const numbers = this.selected().map((id) => this.order.indexOf(id) + 1);
    return `${numbers[0]} and ${numbers[1]}`;
  }
}

/** Card list with checkboxes plus a submit button wired to the selection. */
export function renderCards(cards: SpotCard[], selection: CardSelection): string {
  const picked = new Set(selection.selected());
  const rows = cards
    .map((card, i) => {
      const checked = picked.has(card.spot_id) ? " checked" : "";
      return (
        `<li class="pick${picked.has(card.spot_id) ? " picked" : ""}" data-spot="${escapeHtml(card.spot_id)}">` +
        `<input type="checkbox" data-spot="${escapeHtml(card.spot_id)}"${checked}> ` +
        `<span class="num">${i + 1}</span> ` +
        `<span class="name">${escapeHtml(card.name)}</span>` +
        `</li>`
      );
    })
    .join("");
  const disabled = selection.canSubmit() ? "" : " disabled";
  return (
    `<div class="chooser"><ul>${rows}</ul>` +
    `<button class="submit-choice"${disabled}>Choose these two</button></div>`
  );
}
