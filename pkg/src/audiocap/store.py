"""Workspace persistence and quality-control statistics.

Manifests and the run ledger live as JSON-Lines files in a workspace
directory. Appends are atomic per batch (write old content plus batch to a
temp file, then rename) and serialized through a per-file lock, so a reader
can never observe a torn trailing line.
"""

from __future__ import annotations

import csv
import json
import os
import random
import threading
from dataclasses import dataclass
from pathlib import Path

from .prompts import tokenize
from .records import (
    REMOTE_TOOLS,
    CaptionRecord,
    ClipRecord,
    Record,
    parse_manifest,
    serialize_manifest,
)

# The six tools whose clues get human accuracy review (dataset labels are
# ground truth by construction and are not reviewed).
REVIEWED_TOOLS = REMOTE_TOOLS


@dataclass
class CorpusStats:
    pair_count: int
    avg_sentence_len: float
    vocab_size: int
    word_freq: dict[str, int]
    env_caption_ratio: float

    def __post_init__(self) -> None:
        if self.vocab_size != len(self.word_freq):
            raise ValueError("vocab_size must equal len(word_freq)")

    def to_dict(self) -> dict:
        return {
            "pair_count": self.pair_count,
            "avg_sentence_len": self.avg_sentence_len,
            "vocab_size": self.vocab_size,
            "word_freq": dict(sorted(self.word_freq.items())),
            "env_caption_ratio": self.env_caption_ratio,
        }


@dataclass
class ManualCheckStats:
    correspondence: float
    modification: float
    inaudibility: float
    n_reviewed: int

    def __post_init__(self) -> None:
        for name in ("correspondence", "modification", "inaudibility"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.n_reviewed < 1:
            raise ValueError("n_reviewed must be >= 1 when ratios are reported")

    def to_dict(self) -> dict:
        return {
            "correspondence": self.correspondence,
            "modification": self.modification,
            "inaudibility": self.inaudibility,
            "n_reviewed": self.n_reviewed,
        }


@dataclass
class ToolAccuracyStats:
    per_tool: dict[str, float]
    mean_accuracy: float
    min_correct_clues_histogram: dict[int, int]
    caption_accuracy: float

    def to_dict(self) -> dict:
        return {
            "per_tool": {t: self.per_tool[t] for t in REVIEWED_TOOLS},
            "mean_accuracy": self.mean_accuracy,
            "min_correct_clues_histogram": {
                str(k): v for k, v in sorted(self.min_correct_clues_histogram.items())},
            "caption_accuracy": self.caption_accuracy,
        }


@dataclass
class ClueReview:
    """One human check of a clip's six tool clues and its caption."""

    clip_id: str
    per_tool_correct: dict[str, bool]
    caption_correct: bool

    def __post_init__(self) -> None:
        missing = [t for t in REVIEWED_TOOLS if t not in self.per_tool_correct]
        if missing:
            raise ValueError(f"clue review for {self.clip_id} is missing tools: "
                             f"{', '.join(missing)}")


def compute_corpus_stats(captions: list[CaptionRecord],
                         place_lexicon: frozenset[str] | set[str]) -> CorpusStats:
    """Corpus-wide caption statistics over normalized words."""
    if not captions:
        raise ValueError("cannot compute corpus stats over an empty caption set")
    word_freq: dict[str, int] = {}
    total_words = 0
    env_hits = 0
    for rec in captions:
        words = tokenize(rec.caption)
        total_words += len(words)
        for w in words:
            word_freq[w] = word_freq.get(w, 0) + 1
        if any(w in place_lexicon for w in words):
            env_hits += 1
    n = len(captions)
    return CorpusStats(
        pair_count=n,
        avg_sentence_len=total_words / n,
        vocab_size=len(word_freq),
        word_freq=word_freq,
        env_caption_ratio=env_hits / n,
    )


def compute_manual_check_stats(reviews: list[CaptionRecord]) -> ManualCheckStats:
    """Aggregate reviewed captions into the three manual-check ratios.

    Modification is the word-level ratio: total modified words over total
    words across all reviewed captions, not a per-caption mean.
    """
    if not reviews:
        raise ValueError("cannot compute manual-check stats without reviews")
    for rec in reviews:
        if rec.review is None:
            raise ValueError(f"caption {rec.clip_id} has no review")
    n = len(reviews)
    correspond = sum(1 for r in reviews if r.review.verdict == "correspond")
    modified = sum(r.review.modified_word_count for r in reviews)
    total = sum(r.review.total_word_count for r in reviews)
    inaudible = sum(1 for r in reviews if r.review.inaudible)
    return ManualCheckStats(
        correspondence=correspond / n,
        modification=modified / total,
        inaudibility=inaudible / n,
        n_reviewed=n,
    )


def compute_tool_accuracy(clue_reviews: list[ClueReview]) -> ToolAccuracyStats:
    """Per-tool accuracy plus the correct-clues-per-sample histogram."""
    if not clue_reviews:
        raise ValueError("cannot compute tool accuracy without reviews")
    n = len(clue_reviews)
    per_tool = {}
    for tool in REVIEWED_TOOLS:
        per_tool[tool] = sum(1 for r in clue_reviews if r.per_tool_correct[tool]) / n
    histogram: dict[int, int] = {}
    for r in clue_reviews:
        k = sum(1 for tool in REVIEWED_TOOLS if r.per_tool_correct[tool])
        histogram[k] = histogram.get(k, 0) + 1
    caption_acc = sum(1 for r in clue_reviews if r.caption_correct) / n
    return ToolAccuracyStats(
        per_tool=per_tool,
        mean_accuracy=sum(per_tool.values()) / len(per_tool),
        min_correct_clues_histogram=histogram,
        caption_accuracy=caption_acc,
    )


def sample_benchmark_split(clips: list[ClipRecord], seed: int,
                           n_val: int, n_test: int) -> dict[str, list[str]]:
    """Draw disjoint validation and test id sets, deterministic per seed."""
    if n_val < 0 or n_test < 0:
        raise ValueError("split sizes must be non-negative")
    if n_val + n_test > len(clips):
        raise ValueError(f"cannot draw {n_val}+{n_test} ids from {len(clips)} clips")
    ids = sorted(c.id for c in clips)
    rng = random.Random(seed)
    rng.shuffle(ids)
    return {"val_ids": ids[:n_val], "test_ids": ids[n_val:n_val + n_test]}


# -- JSONL persistence -------------------------------------------------------

_file_locks: dict[str, threading.Lock] = {}
_file_locks_guard = threading.Lock()


def _lock_for(path: Path) -> threading.Lock:
    key = str(path.resolve())
    with _file_locks_guard:
        if key not in _file_locks:
            _file_locks[key] = threading.Lock()
        return _file_locks[key]


def append_records(path: str | Path, records: list[Record]) -> int:
    """Append a batch of records; the file is unchanged or fully extended."""
    path = Path(path)
    if not records:
        return 0
    batch = serialize_manifest(records)
    with _lock_for(path):
        existing = path.read_bytes() if path.exists() else b""
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(existing + batch)
        os.replace(tmp, path)
    return len(records)


def append_ledger(path: str | Path, events: list[dict]) -> int:
    """Append free-form JSON events to a run ledger, one object per line."""
    path = Path(path)
    if not events:
        return 0
    batch = "".join(json.dumps(e, ensure_ascii=False, separators=(",", ":")) + "\n"
                    for e in events).encode("utf-8")
    with _lock_for(path):
        existing = path.read_bytes() if path.exists() else b""
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(existing + batch)
        os.replace(tmp, path)
    return len(events)


def write_manifest(path: str | Path, records: list[Record]) -> int:
    """Replace a manifest atomically (used by deterministic pipeline reruns)."""
    path = Path(path)
    with _lock_for(path):
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(serialize_manifest(records))
        os.replace(tmp, path)
    return len(records)


def read_manifest(path: str | Path, kind: str) -> list[Record]:
    path = Path(path)
    if not path.exists():
        return []
    return parse_manifest(path.read_bytes(), kind)


def latest_captions(records: list[CaptionRecord]) -> list[CaptionRecord]:
    """Collapse an append-only caption ledger: the last record per clip wins."""
    by_clip: dict[str, CaptionRecord] = {}
    for rec in records:
        by_clip[rec.clip_id] = rec
    return list(by_clip.values())


def export_word_freq_csv(path: str | Path, stats: CorpusStats) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["word", "count"])
        for word, count in sorted(stats.word_freq.items(),
                                  key=lambda kv: (-kv[1], kv[0])):
            writer.writerow([word, count])
