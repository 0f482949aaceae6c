"""Two-stage clip filtering: raw-label rule and the five-trial sync protocol.

AudioSet clips whose label set contains both a speech label and a music
label are dropped outright. Surviving AudioSet clips get five audio-visual
synchronization probes with randomized true offsets; a clip is dropped only
when every probe lands outside the tolerance window. VGGSound clips skip
both stages.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field

from .records import (
    SYNC_TRIAL_COUNT,
    ClipRecord,
    FilterVerdict,
    SyncTrial,
)

DEFAULT_SPEECH_LABELS = frozenset({"Speech"})
DEFAULT_MUSIC_LABELS = frozenset({"Music"})

# |pred - true| is rounded to this many decimals before classification so
# that grid-aligned offsets are not misclassified by float representation
# dust (0.8 - 0.2 != 0.6 in binary floating point).
_OFFSET_DECIMALS = 9


@dataclass
class LabelFilterConfig:
    speech_labels: frozenset[str] = DEFAULT_SPEECH_LABELS
    music_labels: frozenset[str] = DEFAULT_MUSIC_LABELS

    def __post_init__(self) -> None:
        if not self.speech_labels or not self.music_labels:
            raise ValueError("speech_labels and music_labels must be non-empty")
        self.speech_labels = frozenset(self.speech_labels)
        self.music_labels = frozenset(self.music_labels)


@dataclass
class SyncFilterConfig:
    trials: int = SYNC_TRIAL_COUNT
    tolerance_s: float = 0.6
    grid_s: float = 0.2
    correct_eps_s: float = 0.1

    def __post_init__(self) -> None:
        if self.trials != SYNC_TRIAL_COUNT:
            raise ValueError(f"the protocol runs exactly {SYNC_TRIAL_COUNT} trials")
        if not (0 < self.correct_eps_s < self.tolerance_s):
            raise ValueError("must satisfy 0 < correct_eps_s < tolerance_s")
        if self.grid_s <= 0:
            raise ValueError("grid_s must be positive")


def label_filter(clip: ClipRecord, cfg: LabelFilterConfig) -> str:
    """Return ``removed_speech_music`` iff labels hit both speech and music."""
    if clip.source != "audioset":
        raise ValueError("label_filter applies to audioset clips only")
    labels = set(clip.labels)
    if labels & cfg.speech_labels and labels & cfg.music_labels:
        return "removed_speech_music"
    return "pass"


def classify_trial(true_offset_s: float, pred_offset_s: float,
                   cfg: SyncFilterConfig) -> str:
    """Classify one sync probe as correct, tolerable, or error.

    Non-finite offsets classify as error (conservative toward removal).
    """
    if not (math.isfinite(true_offset_s) and math.isfinite(pred_offset_s)):
        return "error"
    d = round(abs(pred_offset_s - true_offset_s), _OFFSET_DECIMALS)
    if d < cfg.correct_eps_s:
        return "correct"
    if d <= cfg.tolerance_s:
        return "tolerable"
    return "error"


def sync_filter(trial_classes: list[str]) -> str:
    """Removal rule over the five trial classes: drop only on all-error."""
    if len(trial_classes) != SYNC_TRIAL_COUNT:
        raise ValueError(f"expected {SYNC_TRIAL_COUNT} trial classes, "
                         f"got {len(trial_classes)}")
    if all(c == "error" for c in trial_classes):
        return "removed_all_error"
    return "pass"


def derive_trial_rng(seed: int, clip_id: str) -> random.Random:
    """Per-clip RNG derived from the run seed; stable across processes."""
    digest = hashlib.sha256(f"{seed}:{clip_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def default_offset_choices(cfg: SyncFilterConfig, span_s: float = 2.0) -> list[float]:
    """Grid-aligned candidate true offsets in [-span_s, span_s]."""
    n = int(round(span_s / cfg.grid_s))
    return [round(k * cfg.grid_s, _OFFSET_DECIMALS) for k in range(-n, n + 1)]


@dataclass
class TrialPlan:
    true_offset_s: float
    start_jitter_s: float


def plan_trials(clip_id: str, seed: int, cfg: SyncFilterConfig,
                offset_choices: list[float] | None = None,
                jitter_choices: list[float] | None = None) -> list[TrialPlan]:
    """Draw the five randomized (offset, start jitter) pairs for a clip."""
    rng = derive_trial_rng(seed, clip_id)
    offsets = offset_choices or default_offset_choices(cfg)
    jitters = jitter_choices if jitter_choices is not None else [0.0, 0.5, 1.0, 1.5, 2.0]
    return [TrialPlan(rng.choice(offsets), rng.choice(jitters))
            for _ in range(cfg.trials)]


@dataclass
class FilterRunConfig:
    label: LabelFilterConfig = field(default_factory=LabelFilterConfig)
    sync: SyncFilterConfig = field(default_factory=SyncFilterConfig)
    seed: int = 0
    offset_choices: list[float] | None = None
    jitter_choices: list[float] | None = None


def run_filters(clips: list[ClipRecord], sync_probe, cfg: FilterRunConfig) -> list[FilterVerdict]:
    """Produce one FilterVerdict per clip, in input order.

    ``sync_probe(clip, true_offset_s, start_jitter_s, trial_index)`` must
    return the predicted offset in seconds; raising marks that trial as
    error-class. Clips removed by the label rule short-circuit the five
    sync probes.
    """
    verdicts = []
    for clip in clips:
        if clip.source == "vggsound":
            verdicts.append(FilterVerdict(
                clip_id=clip.id, label_filter="pass", sync_trials=[],
                sync_filter="skipped", final="kept"))
            continue
        label_result = label_filter(clip, cfg.label)
        if label_result == "removed_speech_music":
            verdicts.append(FilterVerdict(
                clip_id=clip.id, label_filter=label_result, sync_trials=[],
                sync_filter="skipped", final="removed"))
            continue
        trials = []
        for index, plan in enumerate(plan_trials(clip.id, cfg.seed, cfg.sync,
                                                 cfg.offset_choices,
                                                 cfg.jitter_choices)):
            try:
                pred = sync_probe(clip, plan.true_offset_s, plan.start_jitter_s, index)
            except Exception:
                trials.append(SyncTrial(plan.true_offset_s, None, "error"))
                continue
            outcome = classify_trial(plan.true_offset_s, pred, cfg.sync)
            trials.append(SyncTrial(plan.true_offset_s, pred, outcome))
        sync_result = sync_filter([t.outcome for t in trials])
        final = "removed" if sync_result == "removed_all_error" else "kept"
        verdicts.append(FilterVerdict(
            clip_id=clip.id, label_filter="pass", sync_trials=trials,
            sync_filter=sync_result, final=final))
    return verdicts
