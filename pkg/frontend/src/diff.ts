// Word-level diff used to pre-fill modified_word_count. Tokenization must
// mirror the server's rules (lowercase, whitespace split, strip edge
// punctuation) so the pre-filled count and the server's total use the same
// word notion.

export function tokenize(text: string): string[] {
  const words: string[] = [];
  for (const raw of text.toLowerCase().split(/\s+/)) {
    const w = raw.replace(/^[^a-z0-9]+|[^a-z0-9]+$/g, "");
    if (w.length > 0) words.push(w);
  }
  return words;
}

export function lcsLength(a: string[], b: string[]): number {
  if (a.length === 0 || b.length === 0) return 0;
  let prev = new Array<number>(b.length + 1).fill(0);
  for (const x of a) {
    const curr = [0];
    for (let j = 1; j <= b.length; j++) {
      curr.push(x === b[j - 1] ? prev[j - 1]! + 1 : Math.max(prev[j]!, curr[j - 1]!));
    }
    prev = curr;
  }
  return prev[b.length]!;
}

/**
 * Count of edited-caption words that were not carried over from the
 * original. Floored at 1 whenever the token streams differ (a pure
 * deletion still counts as one modification), and never above the edited
 * caption's word count so it stays a valid ratio numerator.
 */
export function modifiedWordCount(original: string, edited: string): number {
  const a = tokenize(original);
  const b = tokenize(edited);
  if (a.length === b.length && a.every((w, i) => w === b[i])) return 0;
  const changed = b.length - lcsLength(a, b);
  return Math.max(1, changed);
}
