"""Numeric evaluation: retrieval recall, zero-shot classification, caption
metrics, and reference implementations of the two training losses.

Everything here is a pure function over supplied embeddings or text; no
encoder ever runs in-process. Losses are desk-scale value oracles (no
gradients). Similarity is always cosine: rows are L2-normalized and ranked
by dot product, with ties broken toward the lower index.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .prompts import tokenize

CIDER_MAX_NGRAM = 4
CIDER_SCALE = 10.0
ROUGE_BETA = 1.2

ZERO_SHOT_PROMPTS = {
    "environment": "The sound in {label}",
    "generic": "The sound of {label}",
}


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2-D embedding matrix")
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero embedding row")
    return m / norms


@dataclass
class EmbeddingBatch:
    """Aligned audio/text embeddings with multi-caption ground truth."""

    audio: np.ndarray
    text: np.ndarray
    gt: dict[int, set[int]]
    tau: float = 1.0

    def __post_init__(self) -> None:
        self.audio = np.asarray(self.audio, dtype=np.float64)
        self.text = np.asarray(self.text, dtype=np.float64)
        if self.audio.ndim != 2 or self.text.ndim != 2:
            raise ValueError("audio and text must be 2-D matrices")
        if self.audio.shape[1] != self.text.shape[1] or self.audio.shape[1] < 1:
            raise ValueError("audio and text must share a dimension >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        n_a, n_t = self.audio.shape[0], self.text.shape[0]
        if not self.gt:
            raise ValueError("ground-truth map must be non-empty")
        for a, texts in self.gt.items():
            if not 0 <= a < n_a:
                raise ValueError(f"gt audio index {a} out of range")
            if not texts:
                raise ValueError(f"gt set for audio {a} is empty")
            for t in texts:
                if not 0 <= t < n_t:
                    raise ValueError(f"gt text index {t} out of range")

    @classmethod
    def paired(cls, audio: np.ndarray, text: np.ndarray,
               tau: float = 1.0) -> "EmbeddingBatch":
        """Identity-paired batch (row i of audio matches row i of text)."""
        n = np.asarray(audio).shape[0]
        return cls(audio=audio, text=text, gt={i: {i} for i in range(n)}, tau=tau)

    def text_to_audio_gt(self) -> dict[int, int]:
        """Invert gt; every text may belong to at most one audio."""
        inverse: dict[int, int] = {}
        for a, texts in self.gt.items():
            for t in texts:
                if t in inverse:
                    raise ValueError(f"text {t} is ground truth for two audios")
                inverse[t] = a
        return inverse


@dataclass
class RetrievalReport:
    direction: str
    recall_at: dict[int, float]

    def __post_init__(self) -> None:
        if self.direction not in ("audio_to_text", "text_to_audio"):
            raise ValueError(f"bad direction {self.direction!r}")
        ks = list(self.recall_at)
        vals = [self.recall_at[k] for k in ks]
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError("recall must be non-decreasing in k")

    def to_dict(self) -> dict:
        return {"direction": self.direction,
                "recall_at": {str(k): v for k, v in self.recall_at.items()}}


def _ranked_indices(scores: np.ndarray) -> np.ndarray:
    # Stable sort on negated scores keeps the lower index first among ties.
    return np.argsort(-scores, kind="stable")


def recall_at_k(batch: EmbeddingBatch,
                ks: list[int]) -> tuple[RetrievalReport, RetrievalReport]:
    """Recall@k in both directions over cosine similarity.

    Audio-to-text counts a hit when any ground-truth caption of the audio
    ranks in the top k; text-to-audio queries each captioned text for its
    single audio.
    """
    if not ks or sorted(ks) != list(ks):
        raise ValueError("ks must be non-empty and sorted ascending")
    if ks[0] < 1:
        raise ValueError("k must be >= 1")
    audio = l2_normalize(batch.audio)
    text = l2_normalize(batch.text)
    n_a, n_t = audio.shape[0], text.shape[0]
    if ks[-1] > n_t:
        raise ValueError(f"k={ks[-1]} exceeds text count {n_t}")
    if ks[-1] > n_a:
        raise ValueError(f"k={ks[-1]} exceeds audio count {n_a}")
    sims = audio @ text.T

    a2t = {}
    queries = sorted(batch.gt)
    ranked_texts = {i: _ranked_indices(sims[i]) for i in queries}
    for k in ks:
        hits = sum(1 for i in queries
                   if batch.gt[i].intersection(ranked_texts[i][:k].tolist()))
        a2t[k] = hits / len(queries)

    inverse = batch.text_to_audio_gt()
    t2a = {}
    text_queries = sorted(inverse)
    ranked_audios = {j: _ranked_indices(sims[:, j]) for j in text_queries}
    for k in ks:
        hits = sum(1 for j in text_queries
                   if inverse[j] in ranked_audios[j][:k].tolist())
        t2a[k] = hits / len(text_queries)

    return (RetrievalReport("audio_to_text", a2t),
            RetrievalReport("text_to_audio", t2a))


def zero_shot_classify(audio: np.ndarray, labels: list[str], kind: str,
                       text_embedder) -> float:
    """Zero-shot accuracy via prompt retrieval.

    ``labels[i]`` is the ground-truth label of audio row i; each distinct
    label becomes one prompt and classification is the argmax cosine
    similarity (recall at 1).
    """
    if not labels:
        raise ValueError("labels must be non-empty")
    if kind not in ZERO_SHOT_PROMPTS:
        raise ValueError(f"kind must be one of {sorted(ZERO_SHOT_PROMPTS)}")
    audio = l2_normalize(audio)
    if audio.shape[0] != len(labels):
        raise ValueError("one label per audio row is required")
    classes = list(dict.fromkeys(labels))
    template = ZERO_SHOT_PROMPTS[kind]
    prompt_vecs = []
    for label in classes:
        vec = np.asarray(text_embedder(template.format(label=label)),
                         dtype=np.float64).reshape(-1)
        if vec.shape[0] != audio.shape[1]:
            raise ValueError(f"embedder returned dimension {vec.shape[0]}, "
                             f"audio has {audio.shape[1]}")
        prompt_vecs.append(vec)
    prompts = l2_normalize(np.stack(prompt_vecs))
    sims = audio @ prompts.T
    predicted = np.argmax(sims, axis=1)
    class_index = {label: i for i, label in enumerate(classes)}
    correct = sum(1 for row, label in enumerate(labels)
                  if predicted[row] == class_index[label])
    return correct / len(labels)


# -- caption metrics ---------------------------------------------------------

def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(candidate: str, references: list[str],
            beta: float = ROUGE_BETA) -> float:
    """LCS F-measure with recall-weighted beta, max over references."""
    cand = tokenize(candidate)
    refs = [tokenize(r) for r in references]
    refs = [r for r in refs if r]
    if not cand or not refs:
        warnings.warn("rouge_l: candidate or references empty after tokenization")
        return 0.0
    best = 0.0
    for ref in refs:
        lcs = _lcs_length(cand, ref)
        if lcs == 0:
            continue
        prec = lcs / len(cand)
        rec = lcs / len(ref)
        score = ((1 + beta ** 2) * prec * rec) / (rec + beta ** 2 * prec)
        best = max(best, score)
    return best


def _ngram_counter(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _tfidf_cosine(cand: Counter, ref: Counter, idf: dict,
                  default_idf: float) -> float:
    # N-grams unseen in the reference corpus have df clamped to 1, so they
    # carry full idf weight and count toward the candidate norm.
    dot = 0.0
    for ngram, c in cand.items():
        if ngram in ref:
            w = idf.get(ngram, default_idf)
            dot += (c * w) * (ref[ngram] * w)
    norm_c = math.sqrt(sum((c * idf.get(g, default_idf)) ** 2
                           for g, c in cand.items()))
    norm_r = math.sqrt(sum((c * idf.get(g, default_idf)) ** 2
                           for g, c in ref.items()))
    if norm_c == 0.0 or norm_r == 0.0:
        return 0.0
    return dot / (norm_c * norm_r)


@dataclass
class CiderResult:
    per_item: list[float]
    corpus_mean: float


def cider(candidates: list[str], references: list[list[str]]) -> CiderResult:
    """Consensus caption score: tf-idf n-gram cosine, n=1..4, scaled by 10.

    Document frequency for the idf weights comes from the reference corpus:
    an n-gram's df is the number of corpus items whose reference set
    mentions it.
    """
    if len(candidates) != len(references):
        raise ValueError("need one reference list per candidate")
    n_items = len(candidates)
    if n_items < 2:
        raise ValueError("idf is degenerate on a corpus of fewer than 2 items")
    cand_tokens = [tokenize(c) for c in candidates]
    ref_tokens = [[tokenize(r) for r in refs] for refs in references]

    per_n_idf: list[dict] = []
    log_n = math.log(n_items)
    for n in range(1, CIDER_MAX_NGRAM + 1):
        df: Counter = Counter()
        for refs in ref_tokens:
            seen = set()
            for ref in refs:
                seen.update(_ngram_counter(ref, n).keys())
            df.update(seen)
        per_n_idf.append({g: log_n - math.log(max(1.0, c)) for g, c in df.items()})

    scores = []
    for cand, refs in zip(cand_tokens, ref_tokens):
        if not refs:
            raise ValueError("every candidate needs at least one reference")
        total = 0.0
        for n in range(1, CIDER_MAX_NGRAM + 1):
            idf = per_n_idf[n - 1]
            cand_counts = _ngram_counter(cand, n)
            sim = sum(_tfidf_cosine(cand_counts, _ngram_counter(ref, n), idf,
                                    default_idf=log_n)
                      for ref in refs) / len(refs)
            total += sim / CIDER_MAX_NGRAM
        scores.append(CIDER_SCALE * total)
    return CiderResult(per_item=scores, corpus_mean=sum(scores) / n_items)


def spider(candidates: list[str], references: list[list[str]],
           spice_scores: list[float]) -> list[float]:
    """Per-item mean of the native consensus score and external scene scores."""
    if len(spice_scores) != len(candidates):
        raise ValueError(f"got {len(spice_scores)} external scores for "
                         f"{len(candidates)} candidates")
    for s in spice_scores:
        if s < 0 or not math.isfinite(s):
            raise ValueError("external scores must be finite and >= 0")
    cider_scores = cider(candidates, references).per_item
    return [(c + s) / 2.0 for c, s in zip(cider_scores, spice_scores)]


def sbert_similarity(candidate_emb: np.ndarray,
                     reference_embs: list[np.ndarray]) -> float:
    """Max cosine similarity between a candidate and its references."""
    cand = np.asarray(candidate_emb, dtype=np.float64).reshape(-1)
    if not reference_embs:
        raise ValueError("need at least one reference embedding")
    if np.linalg.norm(cand) == 0:
        raise ValueError("candidate embedding is the zero vector")
    best = -1.0
    for ref in reference_embs:
        r = np.asarray(ref, dtype=np.float64).reshape(-1)
        if r.shape != cand.shape:
            raise ValueError("embedding dimensions differ")
        norm = np.linalg.norm(r)
        if norm == 0:
            raise ValueError("reference embedding is the zero vector")
        best = max(best, float(cand @ r / (np.linalg.norm(cand) * norm)))
    return best


# -- training-loss reference values ------------------------------------------

def _log_softmax_rows(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(scores - m).sum(axis=1, keepdims=True))
    return scores - lse


def info_nce_loss(batch: EmbeddingBatch) -> float:
    """Symmetric contrastive loss over identity-paired embeddings.

    Rows are L2-normalized first; both softmax directions are computed with
    a stable log-sum-exp and averaged over 2N terms. The returned value is
    the negated mean log-likelihood, a minimizable loss.
    """
    n_a, n_t = batch.audio.shape[0], batch.text.shape[0]
    if n_a == 0:
        raise ValueError("batch is empty")
    if n_a != n_t:
        raise ValueError("paired loss needs equally many audio and text rows")
    for i in range(n_a):
        if batch.gt.get(i) != {i}:
            raise ValueError("paired loss requires identity ground truth")
    audio = l2_normalize(batch.audio)
    text = l2_normalize(batch.text)
    scores = (audio @ text.T) / batch.tau
    a2t = np.diagonal(_log_softmax_rows(scores))
    t2a = np.diagonal(_log_softmax_rows(scores.T))
    return float(-(a2t.sum() + t2a.sum()) / (2 * n_a))


@dataclass
class TokenSequence:
    """Conditional log-probabilities of the correct tokens of one caption."""

    logprobs: list[float]
    length: int = field(default=-1)

    def __post_init__(self) -> None:
        if self.length == -1:
            self.length = len(self.logprobs)
        if self.length < 1:
            raise ValueError("a token sequence has at least one token")
        if len(self.logprobs) != self.length:
            raise ValueError(f"got {len(self.logprobs)} logprobs for "
                             f"length {self.length}")
        for lp in self.logprobs:
            if not math.isfinite(lp) and lp != -math.inf:
                raise ValueError("logprobs must be finite or -inf")
            if lp > 0:
                raise ValueError(f"logprob {lp} is positive; probabilities "
                                 "cannot exceed 1")


def caption_nll(seqs: list[TokenSequence]) -> float:
    """Negative log-likelihood summed over all sequences and positions."""
    return -sum(lp for seq in seqs for lp in seq.logprobs)


# -- embedding file format -----------------------------------------------------

def save_embeddings(path: str | Path, matrix: np.ndarray) -> None:
    """Write little-endian f32 row-major bytes plus a {rows, dim} sidecar."""
    path = Path(path)
    m = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
    if m.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    path.write_bytes(m.tobytes())
    sidecar = {"rows": int(m.shape[0]), "dim": int(m.shape[1])}
    Path(str(path) + ".json").write_text(json.dumps(sidecar), encoding="utf-8")


def load_embeddings(path: str | Path) -> np.ndarray:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    rows, dim = int(sidecar["rows"]), int(sidecar["dim"])
    flat = np.frombuffer(path.read_bytes(), dtype="<f4")
    if flat.size != rows * dim:
        raise ValueError(f"{path}: expected {rows}x{dim} values, got {flat.size}")
    return flat.reshape(rows, dim).astype(np.float64)


def load_gt_map(path: str | Path) -> dict[int, set[int]]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {int(a): set(int(t) for t in texts) for a, texts in raw.items()}
