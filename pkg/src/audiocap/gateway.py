"""Clients for the remote clue tools, the sync checker, and the LLM.

Two interchangeable backends: ``live`` speaks HTTP POST JSON to configured
endpoints with retries and bounded parallelism; ``replay`` serves canned
responses from ``fixtures/<clip_id>/<tool>.json`` and is byte-deterministic,
which is what every test and reproducible run uses.

Wire format (one schema for all clue tools):
    request  {"clip_id": ..., "media_uri": ..., "params": {...}}
    response {"items": [{"text": ..., "confidence": ...}, ...]}
The sync endpoint responds {"pred_offset_s": ...} and the LLM endpoint takes
{"prompt": ..., "params": {...}} and responds {"caption": ..., "model": ...}.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .records import (
    AUDIO_TAGS_MAX_ITEMS,
    REMOTE_TOOLS,
    ClipRecord,
    Clue,
    ClueItem,
    CluePacket,
    ValidationError,
)

AUTH_TOKEN_ENV = "ACD_TOOL_TOKEN"

ENDPOINT_NAMES = REMOTE_TOOLS + ("dataset_labels", "sync", "llm")

# Tools that look at the frame stream; the rest read the audio stream.
_VISUAL_TOOLS = ("image_caption", "object_detection", "image_label", "place")


class ToolCallError(RuntimeError):
    """A tool call failed after exhausting its retries."""

    def __init__(self, tool: str, message: str):
        self.tool = tool
        super().__init__(f"{tool}: {message}")


class ReplayFixtureMissing(RuntimeError):
    """Replay mode has no fixture file for this clip and tool."""

    def __init__(self, clip_id: str, tool: str, path: Path):
        self.clip_id = clip_id
        self.tool = tool
        super().__init__(f"no replay fixture for clip '{clip_id}' tool '{tool}' "
                         f"at {path}")


class GatewayConfigError(ValueError):
    """The gateway is missing configuration required for the call."""


@dataclass
class ToolEndpointConfig:
    tool: str
    base_url: str
    timeout_s: float = 10.0
    max_retries: int = 2
    backoff_base_ms: float = 250.0
    backoff_cap_ms: float = 8000.0
    auth_token: str | None = None

    def __post_init__(self) -> None:
        if self.tool not in ENDPOINT_NAMES:
            raise ValueError(f"unknown endpoint name {self.tool!r}")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_base_ms <= 0:
            raise ValueError("backoff_base_ms must be > 0")


@dataclass
class ClueFetchResult:
    packet: CluePacket
    errors: dict[str, str] = field(default_factory=dict)


@dataclass
class SyncProbe:
    true_offset_s: float
    pred_offset_s: float


@dataclass
class CaptionResponse:
    caption: str
    model: str


def endpoint_map(endpoints: list[ToolEndpointConfig]) -> dict[str, ToolEndpointConfig]:
    out: dict[str, ToolEndpointConfig] = {}
    for ep in endpoints:
        if ep.tool in out:
            raise ValueError(f"duplicate endpoint for {ep.tool!r}")
        out[ep.tool] = ep
    return out


class ReplayBackend:
    """Deterministic fixture-driven stand-in for the remote endpoints."""

    def __init__(self, fixtures_dir: str | Path):
        self.fixtures_dir = Path(fixtures_dir)

    def fixture_path(self, clip_id: str, tool: str) -> Path:
        return self.fixtures_dir / clip_id / f"{tool}.json"

    def response(self, clip_id: str, tool: str) -> dict:
        path = self.fixture_path(clip_id, tool)
        if not path.is_file():
            raise ReplayFixtureMissing(clip_id, tool, path)
        return json.loads(path.read_bytes())


class LiveBackend:
    def __init__(self) -> None:
        self.session = requests.Session()

    def post(self, cfg: ToolEndpointConfig, body: dict) -> dict:
        headers = {}
        token = cfg.auth_token or os.environ.get(AUTH_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        resp = self.session.post(cfg.base_url, json=body, headers=headers,
                                 timeout=cfg.timeout_s)
        resp.raise_for_status()
        return resp.json()


class ToolGateway:
    """Uniform client layer over all remote tools for one run.

    Thread-safe: tool fan-out goes through a bounded worker pool and
    per-endpoint semaphores cap concurrent calls to any one service.
    """

    def __init__(self,
                 endpoints: list[ToolEndpointConfig] | None = None,
                 backend: str = "replay",
                 fixtures_dir: str | Path | None = None,
                 parallelism: int = 4,
                 per_endpoint_limit: int = 4,
                 grid_s: float = 0.2,
                 sleep=time.sleep,
                 jitter_rng: random.Random | None = None,
                 ledger=None):
        if backend not in ("live", "replay"):
            raise GatewayConfigError(f"unknown backend {backend!r}")
        if parallelism < 1:
            raise GatewayConfigError("parallelism must be >= 1")
        self.backend = backend
        self.endpoints = endpoint_map(endpoints or [])
        self.grid_s = grid_s
        self._sleep = sleep
        self._jitter_rng = jitter_rng or random.Random()
        self._ledger = ledger
        self._pool = ThreadPoolExecutor(max_workers=parallelism)
        self._endpoint_sems = {name: threading.Semaphore(per_endpoint_limit)
                               for name in ENDPOINT_NAMES}
        if backend == "replay":
            if fixtures_dir is None:
                raise GatewayConfigError("replay backend needs fixtures_dir")
            self._replay = ReplayBackend(fixtures_dir)
            self._live = None
        else:
            missing = [t for t in REMOTE_TOOLS if t not in self.endpoints]
            if missing:
                raise GatewayConfigError(
                    f"live backend is missing endpoints for: {', '.join(missing)}")
            self._replay = None
            self._live = LiveBackend()

    def close(self) -> None:
        self._pool.shutdown(wait=True)

    # -- retry plumbing ----------------------------------------------------

    def _endpoint(self, name: str) -> ToolEndpointConfig:
        cfg = self.endpoints.get(name)
        if cfg is None:
            raise GatewayConfigError(f"no endpoint configured for {name!r}")
        return cfg

    def _retry_policy(self, name: str) -> tuple[int, float, float]:
        if self.backend == "replay":
            cfg = self.endpoints.get(name)
            return (cfg.max_retries if cfg else 0, 0.0, 0.0)
        cfg = self._endpoint(name)
        return cfg.max_retries, cfg.backoff_base_ms, cfg.backoff_cap_ms

    def _call_with_retries(self, name: str, fn):
        """Run fn with bounded retries and monotone non-decreasing backoff."""
        max_retries, base_ms, cap_ms = self._retry_policy(name)
        last_delay = 0.0
        attempt = 0
        while True:
            try:
                with self._endpoint_sems[name]:
                    return fn()
            except (requests.RequestException, _EmptyResponse, ValueError,
                    json.JSONDecodeError) as exc:
                if attempt >= max_retries:
                    raise ToolCallError(name, f"failed after {attempt} retries: {exc}")
                attempt += 1
                if base_ms > 0:
                    raw = min(cap_ms, base_ms * (2 ** (attempt - 1)))
                    delay = max(last_delay,
                                raw * (1.0 + self._jitter_rng.uniform(0.0, 0.5)))
                    last_delay = delay
                    self._sleep(delay / 1000.0)

    # -- clue extraction ---------------------------------------------------

    def _media_uri(self, clip: ClipRecord, tool: str) -> str:
        if tool in _VISUAL_TOOLS or tool == "sync":
            return clip.media.video_uri
        return clip.media.audio_uri

    def _tool_response(self, clip: ClipRecord, tool: str, params: dict) -> dict:
        if self.backend == "replay":
            resp = self._replay.response(clip.id, tool)
            if "error" in resp:
                raise ToolCallError(tool, str(resp["error"]))
            return resp
        cfg = self._endpoint(tool)
        body = {"clip_id": clip.id, "media_uri": self._media_uri(clip, tool),
                "params": params}
        return self._call_with_retries(tool, lambda: self._live.post(cfg, body))

    def _fetch_one(self, clip: ClipRecord, tool: str) -> Clue:
        resp = self._tool_response(clip, tool, params={})
        try:
            items = [ClueItem(text=i.get("text", ""), confidence=i.get("confidence"))
                     for i in resp.get("items", [])]
            if tool == "audio_tags":
                items = top_k_by_confidence(items, AUDIO_TAGS_MAX_ITEMS)
            return Clue(tool=tool, items=items)
        except (ValidationError, TypeError, AttributeError) as exc:
            raise ToolCallError(tool, f"invalid response payload: {exc}") from exc

    def fetch_clues(self, clip: ClipRecord) -> ClueFetchResult:
        """Gather one clue per responding tool plus local dataset labels.

        Tool failures yield per-tool error entries instead of aborting the
        clip; a missing replay fixture is a hard error and propagates.
        """
        futures = {tool: self._pool.submit(self._fetch_one, clip, tool)
                   for tool in REMOTE_TOOLS}
        clues: list[Clue] = []
        errors: dict[str, str] = {}
        for tool in REMOTE_TOOLS:
            try:
                clues.append(futures[tool].result())
            except ToolCallError as exc:
                errors[tool] = str(exc)
            except ReplayFixtureMissing:
                for f in futures.values():
                    f.cancel()
                raise
        clues.append(Clue(tool="dataset_labels",
                          items=[ClueItem(text=label) for label in clip.labels]))
        return ClueFetchResult(packet=CluePacket(clip_id=clip.id, clues=clues),
                               errors=errors)

    # -- synchronization ---------------------------------------------------

    def check_sync(self, clip: ClipRecord, true_offset_s: float,
                   start_jitter_s: float = 0.0, trial_index: int = 0) -> SyncProbe:
        """Run one sync probe; the prediction is snapped to the tool grid."""
        if self.backend == "replay":
            resp = self._replay.response(clip.id, "sync")
            if "error" in resp:
                raise ToolCallError("sync", str(resp["error"]))
            pred = _replay_sync_pred(resp, true_offset_s, trial_index)
        else:
            cfg = self._endpoint("sync")
            body = {"clip_id": clip.id, "media_uri": clip.media.video_uri,
                    "params": {"true_offset_s": true_offset_s,
                               "start_jitter_s": start_jitter_s,
                               "trial_index": trial_index}}
            resp = self._call_with_retries("sync", lambda: self._live.post(cfg, body))
            pred = float(resp["pred_offset_s"])
        return SyncProbe(true_offset_s=true_offset_s,
                         pred_offset_s=snap_to_grid(pred, self.grid_s))

    # -- caption generation --------------------------------------------------

    def generate_caption(self, prompt: str, clip_id: str | None = None) -> CaptionResponse:
        """Ask the LLM for a caption; the raw response goes to the run ledger."""
        if not prompt.strip():
            raise ValueError("prompt must be non-empty")
        if self.backend == "replay":
            if clip_id is None:
                raise GatewayConfigError("replay caption generation needs clip_id")
            resp = self._call_with_retries(
                "llm", lambda: self._replay_llm_response(clip_id, prompt))
        else:
            cfg = self._endpoint("llm")
            body = {"prompt": prompt, "params": {}}
            resp = self._call_with_retries(
                "llm", lambda: _nonempty(self._live.post(cfg, body)))
        caption = resp["caption"].strip()
        model = resp.get("model", "unknown")
        if self._ledger is not None:
            self._ledger({"event": "llm_response", "clip_id": clip_id,
                          "model": model, "response": resp})
        return CaptionResponse(caption=caption, model=model)

    def _replay_llm_response(self, clip_id: str, prompt: str) -> dict:
        resp = self._replay.response(clip_id, "llm")
        if "error" in resp:
            raise ValueError(str(resp["error"]))
        pinned = resp.get("prompt_sha256")
        if pinned is not None:
            actual = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
            if actual != pinned:
                raise ReplayFixtureMissing(
                    clip_id, "llm",
                    self._replay.fixture_path(clip_id, "llm"))
        return _nonempty(resp)


class _EmptyResponse(ValueError):
    pass


def _nonempty(resp: dict) -> dict:
    if not str(resp.get("caption", "")).strip():
        raise _EmptyResponse("LLM returned an empty caption")
    return resp


def top_k_by_confidence(items: list[ClueItem], k: int) -> list[ClueItem]:
    """Top k items by confidence, stable, scoreless items ranked last."""
    indexed = list(enumerate(items))
    indexed.sort(key=lambda pair: (-(pair[1].confidence
                                     if pair[1].confidence is not None else -1.0),
                                   pair[0]))
    return [item for _, item in indexed[:k]]


def snap_to_grid(offset_s: float, grid_s: float) -> float:
    """Snap a predicted offset to the tool's detection grid."""
    return round(round(offset_s / grid_s) * grid_s, 9)


def _replay_sync_pred(resp: dict, true_offset_s: float, trial_index: int) -> float:
    if "pred_delta_s" in resp:
        delta = resp["pred_delta_s"]
        if isinstance(delta, list):
            if trial_index >= len(delta):
                raise ValueError(f"sync fixture has {len(delta)} deltas, "
                                 f"trial {trial_index} requested")
            delta = delta[trial_index]
        return true_offset_s + float(delta)
    pred = resp["pred_offset_s"]
    if isinstance(pred, list):
        if trial_index >= len(pred):
            raise ValueError(f"sync fixture has {len(pred)} predictions, "
                             f"trial {trial_index} requested")
        pred = pred[trial_index]
    return float(pred)
