// HTML builders for the review screen. Pure string functions so the
// interesting ones (caption highlighting, clue grouping) are testable
// without a DOM.

import { Clue, StatsPayload } from "./api.js";
import { tokenize } from "./diff.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Wrap caption words that were flagged as inaudible in <mark> tags. */
export function highlightCaption(caption: string, terms: string[]): string {
  const flagged = new Set(terms.map((t) => t.toLowerCase()));
  return caption
    .split(/(\s+)/)
    .map((chunk) => {
      if (/^\s*$/.test(chunk)) return chunk;
      const [word] = tokenize(chunk);
      const safe = escapeHtml(chunk);
      return word !== undefined && flagged.has(word)
        ? `<mark>${safe}</mark>`
        : safe;
    })
    .join("");
}

export function renderClues(clues: Clue[]): string {
  const sections = clues.map((clue) => {
    const items = clue.items
      .map((item) => {
        const conf =
          item.confidence !== undefined
            ? ` <span class="conf">${item.confidence.toFixed(2)}</span>`
            : "";
        return `<li>${escapeHtml(item.text)}${conf}</li>`;
      })
      .join("");
    return (
      `<section class="clue"><h3>${escapeHtml(clue.tool)}</h3>` +
      `<ul>${items}</ul></section>`
    );
  });
  return sections.join("");
}

const PERCENT = (v: number) => `${(100 * v).toFixed(1)}%`;

/** Stats panel markup; every number comes straight from /api/stats. */
export function renderStats(stats: StatsPayload | null): string {
  if (stats === null) return `<p class="muted">no statistics yet</p>`;
  const corpus = stats.corpus;
  const rows = [
    `<tr><td>captions</td><td>${corpus.pair_count}</td></tr>`,
    `<tr><td>avg words</td><td>${corpus.avg_sentence_len.toFixed(1)}</td></tr>`,
    `<tr><td>vocabulary</td><td>${corpus.vocab_size}</td></tr>`,
    `<tr><td>env mentions</td><td>${PERCENT(corpus.env_caption_ratio)}</td></tr>`,
  ];
  if (stats.manual_check !== undefined) {
    const m = stats.manual_check;
    rows.push(
      `<tr><td>correspondence</td><td>${PERCENT(m.correspondence)}</td></tr>`,
      `<tr><td>modification</td><td>${PERCENT(m.modification)}</td></tr>`,
      `<tr><td>inaudibility</td><td>${PERCENT(m.inaudibility)}</td></tr>`,
      `<tr><td>reviewed</td><td>${m.n_reviewed}</td></tr>`,
    );
  }
  return `<table>${rows.join("")}</table>`;
}
