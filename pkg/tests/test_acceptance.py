"""Acceptance suite: every exit criterion as one test with pinned tolerances.

Each test prints a single PASS line on success (run with -s or -rA to see
them); pytest reports any failure per criterion.
"""

import itertools
import math
import random
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from audiocap import cli, metrics, prompts, store
from audiocap.filtering import (
    FilterRunConfig,
    LabelFilterConfig,
    SyncFilterConfig,
    classify_trial,
    label_filter,
    run_filters,
    sync_filter,
)
from audiocap.records import CaptionRecord, Review, parse_manifest
from audiocap.store import REVIEWED_TOOLS, ClueReview
from conftest import make_clip
from test_metrics import (
    oracle_cider,
    oracle_info_nce,
    oracle_recall,
    oracle_rouge_l,
)

E2E = Path(__file__).parent / "fixtures" / "e2e"
GOLDEN = Path(__file__).parent / "fixtures" / "golden"


def _ok(name: str) -> None:
    print(f"PASS {name}")


def test_filter_exhaustiveness_all_243_tuples():
    start = time.perf_counter()
    outcomes = ("correct", "tolerable", "error")
    removed = [combo for combo in itertools.product(outcomes, repeat=5)
               if sync_filter(list(combo)) == "removed_all_error"]
    brute = [combo for combo in itertools.product(outcomes, repeat=5)
             if all(c == "error" for c in combo)]
    assert removed == brute == [("error",) * 5]
    assert time.perf_counter() - start < 1.0
    _ok("filter exhaustiveness: 243 tuples, only all-error removed, < 1 s")


def test_trial_taxonomy_at_the_tolerance_boundary():
    cfg = SyncFilterConfig()
    ds = [0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.61, 0.8, 1.2]
    got = [classify_trial(0.0, d, cfg) for d in ds]
    assert got == ["correct", "correct", "tolerable", "tolerable", "tolerable",
                   "tolerable", "error", "error", "error"]
    _ok("trial taxonomy: nine distances classify exactly per the 0.6 s rule")


def test_label_filter_removes_exactly_the_speech_music_clips():
    rng = random.Random(50)
    clips = []
    speech_music_ids = set()
    for i in range(50):
        if i % 4 == 1 and len(speech_music_ids) < 12:
            labels = ["Speech", "Music"] + \
                (["Vehicle"] if rng.random() < 0.5 else [])
            clip = make_clip(f"sm{i:02d}", labels=labels)
            speech_music_ids.add(clip.id)
        else:
            labels = rng.choice([["Speech"], ["Music"], ["Engine"],
                                 ["Siren", "Truck"], ["Dog", "Speech"]])
            clip = make_clip(f"ok{i:02d}", labels=list(labels))
        clips.append(clip)
    assert len(speech_music_ids) == 12
    cfg = LabelFilterConfig()
    removed = {c.id for c in clips
               if label_filter(c, cfg) == "removed_speech_music"}
    assert removed == speech_music_ids
    _ok("label filter: exactly the 12 speech+music clips removed from 50")


def test_info_nce_oracle_criteria():
    start = time.perf_counter()
    single = metrics.EmbeddingBatch.paired(np.array([[1.0, 2.0]]),
                                           np.array([[3.0, 4.0]]))
    assert metrics.info_nce_loss(single) == 0.0

    identity = metrics.EmbeddingBatch.paired(np.eye(2), np.eye(2), tau=1.0)
    assert metrics.info_nce_loss(identity) == pytest.approx(0.313262, abs=1e-6)

    rng = np.random.default_rng(101)
    py_rng = random.Random(101)
    for _ in range(50):
        n = py_rng.randint(1, 16)
        d = py_rng.randint(1, 32)
        tau = py_rng.uniform(0.1, 2.0)
        audio = rng.normal(size=(n, d)) + 0.01
        text = rng.normal(size=(n, d)) + 0.01
        got = metrics.info_nce_loss(metrics.EmbeddingBatch.paired(audio, text,
                                                                  tau=tau))
        assert got == pytest.approx(oracle_info_nce(audio, text, tau), abs=1e-9)
        swapped = metrics.info_nce_loss(
            metrics.EmbeddingBatch.paired(text, audio, tau=tau))
        assert got == pytest.approx(swapped, abs=1e-9)
        if n > 1:
            perm = np.array(py_rng.sample(range(n), n))
            permuted = metrics.info_nce_loss(
                metrics.EmbeddingBatch.paired(audio[perm], text[perm], tau=tau))
            assert got == pytest.approx(permuted, abs=1e-9)
    assert time.perf_counter() - start < 1.0
    _ok("contrastive loss: frozen values, 50 oracle batches at 1e-9, "
        "symmetry and permutation invariance, < 1 s")


def test_caption_nll_criteria():
    frozen = metrics.caption_nll(
        [metrics.TokenSequence(logprobs=[math.log(0.5), math.log(0.5)])])
    assert frozen == pytest.approx(1.386294, abs=1e-6)
    # Dyadic logprobs (multiples of 1/1024) make every partial sum exactly
    # representable, so additivity must hold bit for bit.
    rng = random.Random(103)

    def dyadic_seqs(n):
        return [metrics.TokenSequence(
            logprobs=[-rng.randrange(0, 4096) / 1024
                      for _ in range(rng.randint(1, 8))]) for _ in range(n)]

    first, second = dyadic_seqs(6), dyadic_seqs(4)
    assert metrics.caption_nll(first + second) == \
        metrics.caption_nll(first) + metrics.caption_nll(second)
    _ok("caption NLL: -2 ln(1/2) frozen value and exact additivity")


def test_recall_at_k_200_random_instances():
    start = time.perf_counter()
    rng = np.random.default_rng(107)
    py_rng = random.Random(107)
    for _ in range(200):
        n_a = py_rng.randint(1, 30)
        caps = py_rng.randint(1, 5)
        n_t = n_a * caps
        d = py_rng.randint(2, 12)
        audio = rng.normal(size=(n_a, d))
        text = rng.normal(size=(n_t, d))
        gt = {i: set(range(i * caps, (i + 1) * caps)) for i in range(n_a)}
        max_k = min(n_a, n_t)
        ks = sorted(set([1, max(1, max_k // 2), max_k]))
        batch = metrics.EmbeddingBatch(audio=audio, text=text, gt=gt)
        a2t, t2a = metrics.recall_at_k(batch, ks)
        exp_a2t, exp_t2a = oracle_recall(audio, text, gt, ks)
        assert a2t.recall_at == exp_a2t
        assert t2a.recall_at == exp_t2a
        for report in (a2t, t2a):
            vals = [report.recall_at[k] for k in ks]
            assert vals == sorted(vals)
        scaled = metrics.EmbeddingBatch(audio=audio * 11.0, text=text * 0.125,
                                        gt=gt)
        s_a2t, s_t2a = metrics.recall_at_k(scaled, ks)
        assert s_a2t.recall_at == a2t.recall_at
        assert s_t2a.recall_at == t2a.recall_at
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    _ok(f"recall@k: 200 instances match the exhaustive oracle exactly, "
        f"monotone and scale invariant, {elapsed:.2f} s < 5 s")


def test_rouge_l_criteria():
    assert metrics.rouge_l("a b c", ["a c d"]) == pytest.approx(0.6667,
                                                                abs=1e-4)
    assert metrics.rouge_l("a b c", ["a b c"]) == 1.0
    rng = random.Random(109)
    vocab = "abcdefghij"
    for _ in range(100):
        cand = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 15)))
        ref = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 15)))
        assert metrics.rouge_l(cand, [ref]) == pytest.approx(
            oracle_rouge_l(cand, ref), abs=1e-9)
    _ok("rouge-l: boundary cases and 100 random pairs at 1e-9 against the "
        "independent LCS oracle")


def test_cider_and_spider_criteria():
    rng = random.Random(113)
    vocab = ("rain dog engine crowd music water bird man speaks sings "
             "loud quiet fast slow room street").split()
    candidates = [" ".join(rng.choice(vocab) for _ in range(rng.randint(3, 12)))
                  for _ in range(20)]
    references = [[" ".join(rng.choice(vocab) for _ in range(rng.randint(3, 12)))
                   for _ in range(rng.randint(1, 5))] for _ in range(20)]
    got = metrics.cider(candidates, references).per_item
    want = oracle_cider(candidates, references)
    for g, w in zip(got, want):
        assert g == pytest.approx(w, abs=1e-6)

    perm = list(range(20))
    rng.shuffle(perm)
    permuted = metrics.cider([candidates[i] for i in perm],
                             [references[i] for i in perm]).per_item
    for new_pos, old_pos in enumerate(perm):
        assert permuted[new_pos] == got[old_pos]

    spice = [rng.uniform(0, 1) for _ in range(20)]
    combined = metrics.spider(candidates, references, spice)
    for s, c, sp in zip(combined, got, spice):
        assert s == (c + sp) / 2.0
    _ok("cider: 20-caption corpus at 1e-6 against the direct-formula oracle, "
        "exact permutation invariance, spider is the exact mean")


def test_manual_check_reconstruction():
    reviews = []
    for i in range(1000):
        verdict = "correspond" if i < 924 else "not_correspond"
        modified = 1 if i < 940 else 2
        reviews.append(CaptionRecord(
            clip_id=f"clip{i:04d}",
            caption="placeholder caption text",
            prompt_hash="ab12",
            llm_model="m",
            review=Review(verdict=verdict, modified_word_count=modified,
                          total_word_count=20, inaudible=(i < 42),
                          reviewer="qa",
                          timestamp="2024-01-01T00:00:00+00:00")))
    stats = store.compute_manual_check_stats(reviews)
    assert stats.correspondence == 0.924
    assert stats.modification == 0.053
    assert stats.inaudibility == 0.042
    assert stats.n_reviewed == 1000
    _ok("manual check: synthesized 1000 reviews reproduce "
        "{0.924, 0.053, 0.042} exactly")


def test_tool_accuracy_reconstruction():
    correct_counts = {
        "image_caption": 183,
        "object_detection": 151,
        "image_label": 161,
        "place": 145,
        "audio_caption": 154,
        "audio_tags": 181,
    }
    reviews = []
    for i in range(200):
        per_tool = {tool: i < count for tool, count in correct_counts.items()}
        reviews.append(ClueReview(clip_id=f"c{i:03d}", per_tool_correct=per_tool,
                                  caption_correct=(i < 176)))
    stats = store.compute_tool_accuracy(reviews)
    assert stats.per_tool == {
        "image_caption": 0.915,
        "object_detection": 0.755,
        "image_label": 0.805,
        "place": 0.725,
        "audio_caption": 0.770,
        "audio_tags": 0.905,
    }
    assert stats.mean_accuracy == 0.8125
    assert stats.caption_accuracy == 0.88
    assert set(stats.per_tool) == set(REVIEWED_TOOLS)
    _ok("tool accuracy: synthesized 200 reviews reproduce the six per-tool "
        "values and the 0.8125 mean exactly")


def test_end_to_end_replay_counts_and_determinism(tmp_path):
    start = time.perf_counter()

    def run_once(ws_name: str) -> dict[str, bytes]:
        ws = tmp_path / ws_name
        ws.mkdir()
        assert cli.main(["--workspace", str(ws), "ingest",
                         str(E2E / "clips_source.jsonl")]) == 0
        assert cli.main(["--workspace", str(ws), "--seed", "7", "run",
                         "--fixtures", str(E2E / "fixtures")]) == 0
        return {name: (ws / name).read_bytes()
                for name in ("clips.jsonl", "verdicts.jsonl", "clues.jsonl",
                             "captions.jsonl")}

    first = run_once("ws1")
    second = run_once("ws2")
    assert first == second

    captions = parse_manifest(first["captions.jsonl"], "captions")
    verdicts = parse_manifest(first["verdicts.jsonl"], "verdicts")
    assert len(captions) == 15
    assert sum(1 for v in verdicts if v.final == "removed") == 5

    template = prompts.PromptTemplate.load("v1")
    packets = {p.clip_id: p
               for p in parse_manifest(first["clues.jsonl"], "clues")}
    hashes = {c.clip_id: c.prompt_hash for c in captions}
    for golden_file in sorted(GOLDEN.glob("e2e_prompt_*.txt")):
        clip_id = golden_file.stem.removeprefix("e2e_prompt_")
        prompt = prompts.build_prompt(packets[clip_id], template)
        assert prompt == golden_file.read_text(encoding="utf-8")
        assert hashes[clip_id] == prompts.prompt_hash(prompt, template)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    _ok(f"end-to-end replay: 15 captions, 5 removals, byte-identical reruns, "
        f"3 golden prompts bit-exact, {elapsed:.2f} s < 10 s")


def test_benchmark_split_over_50_seeds():
    clips = [make_clip(f"v{i:03d}", labels=["Engine"]) for i in range(60)]
    for seed in range(50):
        first = store.sample_benchmark_split(clips, seed=seed, n_val=20,
                                             n_test=10)
        second = store.sample_benchmark_split(clips, seed=seed, n_val=20,
                                              n_test=10)
        assert first == second
        assert len(first["val_ids"]) == 20
        assert len(first["test_ids"]) == 10
        assert not set(first["val_ids"]) & set(first["test_ids"])
    _ok("benchmark split: seed-stable disjoint sets of the requested sizes "
        "across 50 seeds")
