// Review session state machine, kept free of DOM so invariants are
// directly testable: submit stays disabled until a verdict is chosen, the
// edit buffer must be non-empty while editing, and a rejected submission
// never loses the reviewer's edits.

import {
  ApiError,
  QueueItem,
  ReviewApi,
  ReviewSubmission,
  StatsPayload,
  Verdict,
} from "./api.js";
import { modifiedWordCount } from "./diff.js";

export type Screen =
  | { kind: "loading" }
  | { kind: "review" }
  | { kind: "done" }
  | { kind: "network-error"; message: string };

export interface ReviewForm {
  verdict: Verdict | null;
  editing: boolean;
  editBuffer: string;
  countOverride: number | null;
  inaudible: boolean;
}

const EMPTY_FORM: ReviewForm = {
  verdict: null,
  editing: false,
  editBuffer: "",
  countOverride: null,
  inaudible: false,
};

export class ReviewSession {
  screen: Screen = { kind: "loading" };
  item: QueueItem | null = null;
  form: ReviewForm = { ...EMPTY_FORM };
  stats: StatsPayload | null = null;
  inlineError: string | null = null;
  submitting = false;

  constructor(
    private readonly api: ReviewApi,
    public readonly reviewer: string,
  ) {}

  /** Fetch the next queued item (and stats on first load). */
  async loadNext(): Promise<void> {
    this.screen = { kind: "loading" };
    this.inlineError = null;
    try {
      this.item = await this.api.nextItem();
      if (this.stats === null) {
        this.stats = await this.api.stats();
      }
    } catch (err) {
      this.screen = {
        kind: "network-error",
        message: err instanceof Error ? err.message : String(err),
      };
      return;
    }
    this.form = { ...EMPTY_FORM };
    this.screen = this.item === null ? { kind: "done" } : { kind: "review" };
  }

  setVerdict(verdict: Verdict): void {
    this.form.verdict = verdict;
  }

  startEditing(): void {
    this.form.editing = true;
    if (this.form.editBuffer === "" && this.item !== null) {
      this.form.editBuffer = this.item.caption;
    }
  }

  cancelEditing(): void {
    this.form.editing = false;
    this.form.editBuffer = "";
    this.form.countOverride = null;
  }

  setEditBuffer(text: string): void {
    this.form.editBuffer = text;
  }

  setCountOverride(count: number | null): void {
    this.form.countOverride = count;
  }

  setInaudible(flag: boolean): void {
    this.form.inaudible = flag;
  }

  /** True when the edit buffer actually changes the caption. */
  hasEdit(): boolean {
    return (
      this.form.editing &&
      this.item !== null &&
      this.form.editBuffer.trim().length > 0 &&
      this.form.editBuffer !== this.item.caption
    );
  }

  /** The count shown to the reviewer; identical to what gets submitted. */
  effectiveModifiedCount(): number {
    if (this.form.countOverride !== null) return this.form.countOverride;
    if (!this.hasEdit() || this.item === null) return 0;
    return modifiedWordCount(this.item.caption, this.form.editBuffer);
  }

  canSubmit(): boolean {
    if (this.item === null || this.submitting) return false;
    if (this.form.verdict === null) return false;
    if (this.form.editing && this.form.editBuffer.trim().length === 0) {
      return false;
    }
    return true;
  }

  buildSubmission(): ReviewSubmission {
    if (this.item === null || this.form.verdict === null) {
      throw new Error("submission requires an item and a verdict");
    }
    const submission: ReviewSubmission = {
      clip_id: this.item.clip_id,
      verdict: this.form.verdict,
      modified_word_count: this.effectiveModifiedCount(),
      inaudible: this.form.inaudible,
      reviewer: this.reviewer,
    };
    if (this.hasEdit()) {
      submission.edited_caption = this.form.editBuffer;
    }
    return submission;
  }

  /**
   * Post the review. On success the stats panel refreshes and the next
   * item loads; on a 409/422 the form (including the edit buffer) stays
   * intact with an inline error.
   */
  async submit(): Promise<void> {
    if (!this.canSubmit()) return;
    const submission = this.buildSubmission();
    this.submitting = true;
    this.inlineError = null;
    try {
      await this.api.submit(submission);
    } catch (err) {
      this.submitting = false;
      if (err instanceof ApiError && (err.status === 409 || err.status === 422)) {
        this.inlineError = `${err.status}: ${err.message}`;
        return;
      }
      this.screen = {
        kind: "network-error",
        message: err instanceof Error ? err.message : String(err),
      };
      return;
    }
    this.submitting = false;
    try {
      this.stats = await this.api.stats();
    } catch {
      // Stats refresh failing must not block the queue; the panel keeps
      // its previous numbers until the next successful fetch.
    }
    await this.loadNext();
  }
}
