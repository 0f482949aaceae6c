"""Domain records and the JSON-Lines manifest format shared by every stage.

All records are plain dataclasses that validate themselves on construction
and serialize to one JSON object per line with a fixed key order, so that
equal records always produce byte-identical manifests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, BinaryIO, Iterable, Union

CLIP_DURATION_S = 10.0

SOURCES = ("audioset", "vggsound")

# Canonical tool order, also the order of sections in the LLM prompt.
TOOLS = (
    "image_caption",
    "object_detection",
    "image_label",
    "place",
    "audio_tags",
    "audio_caption",
    "dataset_labels",
)

# Tools answered by a remote endpoint; dataset_labels is synthesized locally.
REMOTE_TOOLS = tuple(t for t in TOOLS if t != "dataset_labels")

AUDIO_TAGS_MAX_ITEMS = 3

LABEL_FILTER_VALUES = ("pass", "removed_speech_music")
SYNC_FILTER_VALUES = ("pass", "removed_all_error", "skipped")
TRIAL_OUTCOMES = ("correct", "tolerable", "error")
FINAL_VALUES = ("kept", "removed")
REVIEW_VERDICTS = ("correspond", "not_correspond")

SYNC_TRIAL_COUNT = 5


class ValidationError(ValueError):
    """A record field violates one of its invariants."""

    def __init__(self, record_type: str, field_name: str, message: str):
        self.record_type = record_type
        self.field = field_name
        super().__init__(f"{record_type}.{field_name}: {message}")


class ManifestError(ValueError):
    """One or more manifest lines failed to parse or validate.

    ``failures`` is a list of (line_number, message) pairs, 1-based.
    """

    def __init__(self, failures: list[tuple[int, str]]):
        self.failures = failures
        lines = "; ".join(f"line {n}: {msg}" for n, msg in failures)
        super().__init__(f"{len(failures)} bad manifest line(s): {lines}")


def _require(cond: bool, record_type: str, field_name: str, message: str) -> None:
    if not cond:
        raise ValidationError(record_type, field_name, message)


def clip_id_for(video_id: str, start_s: float) -> str:
    """Canonical clip id: video id plus the start offset in whole seconds."""
    return f"{video_id}_{int(start_s)}"


@dataclass
class MediaRefs:
    video_uri: str
    audio_uri: str

    def __post_init__(self) -> None:
        _require(bool(self.video_uri), "MediaRefs", "video_uri", "must be non-empty")
        _require(bool(self.audio_uri), "MediaRefs", "audio_uri", "must be non-empty")

    def to_dict(self) -> dict:
        return {"video_uri": self.video_uri, "audio_uri": self.audio_uri}


@dataclass
class ClipRecord:
    """One 10-second audio-visual clip with its source-dataset labels."""

    id: str
    source: str
    video_id: str
    start_s: float
    dur_s: float
    labels: list[str]
    media: MediaRefs

    def __post_init__(self) -> None:
        _require(self.source in SOURCES, "ClipRecord", "source", f"must be one of {SOURCES}")
        _require(bool(self.video_id), "ClipRecord", "video_id", "must be non-empty")
        _require(self.start_s >= 0, "ClipRecord", "start_s", "must be >= 0")
        _require(float(self.start_s) == int(self.start_s), "ClipRecord", "start_s",
                 "must be whole seconds (clip ids encode integer offsets)")
        self.start_s = float(self.start_s)
        _require(self.dur_s == CLIP_DURATION_S, "ClipRecord", "dur_s",
                 f"must be exactly {CLIP_DURATION_S}")
        self.dur_s = float(self.dur_s)
        expected_id = clip_id_for(self.video_id, self.start_s)
        _require(self.id == expected_id, "ClipRecord", "id",
                 f"must equal '{expected_id}' (video_id + '_' + integer start)")
        _require(all(isinstance(x, str) and x for x in self.labels),
                 "ClipRecord", "labels", "must be non-empty strings")
        if self.source == "vggsound":
            _require(len(self.labels) == 1, "ClipRecord", "labels",
                     "vggsound clips carry exactly one label")
        else:
            _require(len(self.labels) >= 1, "ClipRecord", "labels",
                     "audioset clips carry at least one label")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "video_id": self.video_id,
            "start_s": self.start_s,
            "dur_s": self.dur_s,
            "labels": list(self.labels),
            "media": self.media.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClipRecord":
        media = d.get("media") or {}
        return cls(
            id=d.get("id", ""),
            source=d.get("source", ""),
            video_id=d.get("video_id", ""),
            start_s=d.get("start_s", -1),
            dur_s=d.get("dur_s", 0.0),
            labels=list(d.get("labels", [])),
            media=MediaRefs(media.get("video_uri", ""), media.get("audio_uri", "")),
        )


@dataclass
class ClueItem:
    text: str
    confidence: float | None = None

    def __post_init__(self) -> None:
        _require(bool(self.text), "ClueItem", "text", "must be non-empty")
        if self.confidence is not None:
            _require(0.0 <= self.confidence <= 1.0, "ClueItem", "confidence",
                     "must lie in [0, 1]")
            self.confidence = float(self.confidence)

    def to_dict(self) -> dict:
        d: dict = {"text": self.text}
        if self.confidence is not None:
            d["confidence"] = self.confidence
        return d


@dataclass
class Clue:
    """One tool's structured output about a clip."""

    tool: str
    items: list[ClueItem]

    def __post_init__(self) -> None:
        _require(self.tool in TOOLS, "Clue", "tool", f"must be one of {TOOLS}")
        if self.tool == "audio_tags":
            _require(len(self.items) <= AUDIO_TAGS_MAX_ITEMS, "Clue", "items",
                     f"audio_tags keeps at most {AUDIO_TAGS_MAX_ITEMS} items")

    def to_dict(self) -> dict:
        return {"tool": self.tool, "items": [i.to_dict() for i in self.items]}

    @classmethod
    def from_dict(cls, d: dict) -> "Clue":
        items = [ClueItem(i.get("text", ""), i.get("confidence")) for i in d.get("items", [])]
        return cls(tool=d.get("tool", ""), items=items)


@dataclass
class CluePacket:
    """All clues gathered for one clip, at most one per tool."""

    clip_id: str
    clues: list[Clue]

    def __post_init__(self) -> None:
        _require(bool(self.clip_id), "CluePacket", "clip_id", "must be non-empty")
        tools = [c.tool for c in self.clues]
        _require(len(tools) == len(set(tools)), "CluePacket", "clues",
                 "at most one clue per tool")

    def clue_for(self, tool: str) -> Clue | None:
        for c in self.clues:
            if c.tool == tool:
                return c
        return None

    def to_dict(self) -> dict:
        return {"clip_id": self.clip_id, "clues": [c.to_dict() for c in self.clues]}

    @classmethod
    def from_dict(cls, d: dict) -> "CluePacket":
        return cls(clip_id=d.get("clip_id", ""),
                   clues=[Clue.from_dict(c) for c in d.get("clues", [])])


@dataclass
class Review:
    verdict: str
    modified_word_count: int
    total_word_count: int
    inaudible: bool
    reviewer: str
    timestamp: str
    edited_caption: str | None = None

    def __post_init__(self) -> None:
        _require(self.verdict in REVIEW_VERDICTS, "Review", "verdict",
                 f"must be one of {REVIEW_VERDICTS}")
        _require(self.modified_word_count >= 0, "Review", "modified_word_count",
                 "must be >= 0")
        _require(self.total_word_count >= 1, "Review", "total_word_count", "must be >= 1")
        _require(self.modified_word_count <= self.total_word_count,
                 "Review", "modified_word_count", "cannot exceed total_word_count")
        _require(bool(self.reviewer), "Review", "reviewer", "must be non-empty")
        try:
            datetime.fromisoformat(self.timestamp)
        except ValueError:
            raise ValidationError("Review", "timestamp", "must be ISO-8601") from None
        if self.edited_caption is not None:
            _require(bool(self.edited_caption.strip()), "Review", "edited_caption",
                     "must be non-empty when present")

    def to_dict(self) -> dict:
        d: dict = {"verdict": self.verdict}
        if self.edited_caption is not None:
            d["edited_caption"] = self.edited_caption
        d["modified_word_count"] = self.modified_word_count
        d["total_word_count"] = self.total_word_count
        d["inaudible"] = self.inaudible
        d["reviewer"] = self.reviewer
        d["timestamp"] = self.timestamp
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Review":
        return cls(
            verdict=d.get("verdict", ""),
            edited_caption=d.get("edited_caption"),
            modified_word_count=d.get("modified_word_count", -1),
            total_word_count=d.get("total_word_count", 0),
            inaudible=bool(d.get("inaudible", False)),
            reviewer=d.get("reviewer", ""),
            timestamp=d.get("timestamp", ""),
        )


@dataclass
class CaptionFlags:
    inaudible_terms: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"inaudible_terms": list(self.inaudible_terms)}


@dataclass
class CaptionRecord:
    """A generated caption with provenance, QC flags, and review state."""

    clip_id: str
    caption: str
    prompt_hash: str
    llm_model: str
    flags: CaptionFlags = field(default_factory=CaptionFlags)
    review: Review | None = None

    def __post_init__(self) -> None:
        _require(bool(self.clip_id), "CaptionRecord", "clip_id", "must be non-empty")
        _require(bool(self.caption.strip()), "CaptionRecord", "caption",
                 "must be non-empty after trimming")
        _require(bool(self.prompt_hash)
                 and all(c in "0123456789abcdef" for c in self.prompt_hash),
                 "CaptionRecord", "prompt_hash", "must be a lowercase hex digest")
        _require(bool(self.llm_model), "CaptionRecord", "llm_model", "must be non-empty")

    def to_dict(self) -> dict:
        d: dict = {
            "clip_id": self.clip_id,
            "caption": self.caption,
            "prompt_hash": self.prompt_hash,
            "llm_model": self.llm_model,
            "flags": self.flags.to_dict(),
        }
        if self.review is not None:
            d["review"] = self.review.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaptionRecord":
        flags = d.get("flags") or {}
        review = d.get("review")
        return cls(
            clip_id=d.get("clip_id", ""),
            caption=d.get("caption", ""),
            prompt_hash=d.get("prompt_hash", ""),
            llm_model=d.get("llm_model", ""),
            flags=CaptionFlags(list(flags.get("inaudible_terms", []))),
            review=Review.from_dict(review) if review is not None else None,
        )


@dataclass
class SyncTrial:
    """One synchronization probe; ``outcome`` serializes as ``class``."""

    true_offset_s: float
    pred_offset_s: float | None
    outcome: str

    def __post_init__(self) -> None:
        _require(self.outcome in TRIAL_OUTCOMES, "SyncTrial", "class",
                 f"must be one of {TRIAL_OUTCOMES}")
        _require(math.isfinite(self.true_offset_s), "SyncTrial", "true_offset_s",
                 "must be finite")
        if self.pred_offset_s is None or not math.isfinite(self.pred_offset_s):
            # A missing or non-finite prediction is only valid for failed trials.
            _require(self.outcome == "error", "SyncTrial", "pred_offset_s",
                     "may be absent only for error-class trials")
            self.pred_offset_s = None

    def to_dict(self) -> dict:
        return {
            "true_offset_s": self.true_offset_s,
            "pred_offset_s": self.pred_offset_s,
            "class": self.outcome,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyncTrial":
        return cls(
            true_offset_s=d.get("true_offset_s", math.nan),
            pred_offset_s=d.get("pred_offset_s"),
            outcome=d.get("class", ""),
        )


@dataclass
class FilterVerdict:
    """Outcome of label and synchronization filtering for one clip."""

    clip_id: str
    label_filter: str
    sync_trials: list[SyncTrial]
    sync_filter: str
    final: str

    def __post_init__(self) -> None:
        _require(bool(self.clip_id), "FilterVerdict", "clip_id", "must be non-empty")
        _require(self.label_filter in LABEL_FILTER_VALUES, "FilterVerdict", "label_filter",
                 f"must be one of {LABEL_FILTER_VALUES}")
        _require(self.sync_filter in SYNC_FILTER_VALUES, "FilterVerdict", "sync_filter",
                 f"must be one of {SYNC_FILTER_VALUES}")
        _require(self.final in FINAL_VALUES, "FilterVerdict", "final",
                 f"must be one of {FINAL_VALUES}")
        if self.sync_filter == "skipped":
            _require(len(self.sync_trials) == 0, "FilterVerdict", "sync_trials",
                     "must be empty when sync filtering was skipped")
        else:
            _require(len(self.sync_trials) == SYNC_TRIAL_COUNT, "FilterVerdict",
                     "sync_trials", f"must have exactly {SYNC_TRIAL_COUNT} trials")
        removed = (self.label_filter == "removed_speech_music"
                   or self.sync_filter == "removed_all_error")
        _require((self.final == "removed") == removed, "FilterVerdict", "final",
                 "must be 'removed' exactly when a filter removed the clip")

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "label_filter": self.label_filter,
            "sync_trials": [t.to_dict() for t in self.sync_trials],
            "sync_filter": self.sync_filter,
            "final": self.final,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterVerdict":
        return cls(
            clip_id=d.get("clip_id", ""),
            label_filter=d.get("label_filter", ""),
            sync_trials=[SyncTrial.from_dict(t) for t in d.get("sync_trials", [])],
            sync_filter=d.get("sync_filter", ""),
            final=d.get("final", ""),
        )


Record = Union[ClipRecord, CluePacket, CaptionRecord, FilterVerdict]

MANIFEST_KINDS: dict[str, type] = {
    "clips": ClipRecord,
    "clues": CluePacket,
    "captions": CaptionRecord,
    "verdicts": FilterVerdict,
}


def parse_manifest(stream: bytes | str | BinaryIO, kind: str) -> list[Record]:
    """Parse a newline-delimited JSON manifest into validated records.

    Raises ManifestError listing every bad line (1-based) if any line fails
    to parse or validate; for ``clips`` duplicate ids are also rejected.
    """
    if kind not in MANIFEST_KINDS:
        raise ValueError(f"unknown manifest kind: {kind!r}")
    record_cls = MANIFEST_KINDS[kind]
    if hasattr(stream, "read"):
        data = stream.read()
    else:
        data = stream
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data

    records: list[Record] = []
    failures: list[tuple[int, str]] = []
    seen_ids: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            failures.append((line_no, f"malformed JSON: {exc.msg}"))
            continue
        try:
            if not isinstance(obj, dict):
                raise ValidationError(record_cls.__name__, "record",
                                      "line must be a JSON object")
            record = record_cls.from_dict(obj)
        except ValidationError as exc:
            failures.append((line_no, str(exc)))
            continue
        except (TypeError, ValueError, AttributeError) as exc:
            failures.append((line_no, f"invalid {record_cls.__name__}: {exc}"))
            continue
        if kind == "clips":
            if record.id in seen_ids:
                failures.append((line_no, f"duplicate clip id '{record.id}'"))
                continue
            seen_ids.add(record.id)
        records.append(record)
    if failures:
        raise ManifestError(failures)
    return records


def serialize_manifest(records: Iterable[Record]) -> bytes:
    """Serialize records to JSON Lines bytes, one object per line.

    Key order is fixed per record type, so equal inputs are byte-identical.
    """
    lines = []
    for record in records:
        lines.append(json.dumps(record.to_dict(), ensure_ascii=False,
                                separators=(",", ":")))
    if not lines:
        return b""
    return ("\n".join(lines) + "\n").encode("utf-8")
