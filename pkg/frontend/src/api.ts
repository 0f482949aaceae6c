// Typed client for the review service. The UI talks to these four
// endpoints and nothing else; every statistic shown comes from /api/stats.

export interface ClueItem {
  text: string;
  confidence?: number;
}

export interface Clue {
  tool: string;
  items: ClueItem[];
}

export interface QueueItem {
  clip_id: string;
  caption: string;
  clues: Clue[];
  flags: { inaudible_terms: string[] };
}

export interface CorpusStats {
  pair_count: number;
  avg_sentence_len: number;
  vocab_size: number;
  env_caption_ratio: number;
}

export interface ManualCheckStats {
  correspondence: number;
  modification: number;
  inaudibility: number;
  n_reviewed: number;
}

export interface StatsPayload {
  corpus: CorpusStats;
  manual_check?: ManualCheckStats;
}

export type Verdict = "correspond" | "not_correspond";

export interface ReviewSubmission {
  clip_id: string;
  verdict: Verdict;
  edited_caption?: string;
  modified_word_count: number;
  inaudible: boolean;
  reviewer: string;
  force?: boolean;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // keep the status text
  }
  return new ApiError(resp.status, detail);
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  /** Next unreviewed item, or null when the queue (or workspace) is empty. */
  async nextItem(): Promise<QueueItem | null> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/queue?limit=1`);
    if (resp.status === 404) return null;
    if (!resp.ok) throw await parseError(resp);
    const items = (await resp.json()) as QueueItem[];
    return items.length > 0 ? (items[0] ?? null) : null;
  }

  async stats(): Promise<StatsPayload | null> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/stats`);
    if (resp.status === 404) return null;
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as StatsPayload;
  }

  async submit(review: ReviewSubmission): Promise<Record<string, unknown>> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/review`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(review),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as Record<string, unknown>;
  }
}
