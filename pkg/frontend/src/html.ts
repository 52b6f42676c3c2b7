/** Tiny string-template helpers; renderers build plain HTML strings so the
 * transcript stays a pure function of its inputs and tests need no DOM. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Seconds with exactly three decimals, matching the trace export format. */
export function sec3(value: number): string {
  return value.toFixed(3);
}
