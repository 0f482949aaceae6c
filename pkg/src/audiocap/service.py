"""HTTP review service over a workspace: caption queue, review intake, and
live QC statistics.

Reviews are persisted by appending a superseding caption record to the
captions ledger, so history is retained and the latest review per clip
wins. All statistics come straight from the store computations; the service
never re-implements a formula.
"""

from __future__ import annotations

import hashlib
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import prompts, store
from .records import REVIEW_VERDICTS, CaptionRecord, Review, ValidationError


class ReviewSubmission(BaseModel):
    clip_id: str
    verdict: str
    edited_caption: str | None = None
    modified_word_count: int = Field(ge=0)
    inaudible: bool = False
    reviewer: str
    force: bool = False


class Workspace:
    """Read/write view of a workspace directory for the service."""

    def __init__(self, root: str | Path, seed: int = 0,
                 place_lexicon: frozenset[str] | None = None):
        self.root = Path(root)
        self.seed = seed
        self.place_lexicon = place_lexicon or prompts.load_place_lexicon()

    def captions(self) -> list[CaptionRecord]:
        return store.latest_captions(
            store.read_manifest(self.root / "captions.jsonl", "captions"))

    def clues_by_clip(self) -> dict[str, dict]:
        packets = store.read_manifest(self.root / "clues.jsonl", "clues")
        return {p.clip_id: p.to_dict() for p in packets}

    def queue_order_key(self, clip_id: str) -> str:
        return hashlib.sha256(f"{self.seed}:{clip_id}".encode("utf-8")).hexdigest()

    def append_caption(self, record: CaptionRecord) -> None:
        store.append_records(self.root / "captions.jsonl", [record])


def create_app(workspace: str | Path, seed: int = 0,
               auth_token: str | None = None,
               cors_origins: tuple[str, ...] = ("*",)) -> FastAPI:
    ws = Workspace(workspace, seed=seed)
    app = FastAPI(title="audiocap review service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.workspace = ws

    def check_auth(authorization: str | None) -> None:
        if auth_token and authorization != f"Bearer {auth_token}":
            raise HTTPException(status_code=401, detail="bad or missing token")

    @app.get("/api/queue")
    def get_queue(limit: int = Query(default=10)) -> list[dict]:
        if limit < 1:
            raise HTTPException(status_code=400, detail="limit must be >= 1")
        captions = ws.captions()
        if not captions:
            raise HTTPException(status_code=404, detail="workspace has no captions")
        clues = ws.clues_by_clip()
        pending = [c for c in captions if c.review is None]
        pending.sort(key=lambda c: ws.queue_order_key(c.clip_id))
        return [{
            "clip_id": c.clip_id,
            "caption": c.caption,
            "clues": clues.get(c.clip_id, {}).get("clues", []),
            "flags": c.flags.to_dict(),
        } for c in pending[:limit]]

    @app.post("/api/review")
    def post_review(submission: ReviewSubmission,
                    authorization: str | None = Header(default=None)) -> dict:
        check_auth(authorization)
        if submission.verdict not in REVIEW_VERDICTS:
            raise HTTPException(status_code=422,
                                detail=f"verdict must be one of {REVIEW_VERDICTS}")
        if submission.edited_caption is not None and submission.modified_word_count < 1:
            raise HTTPException(
                status_code=422,
                detail="an edited caption implies at least one modified word")
        by_clip = {c.clip_id: c for c in ws.captions()}
        record = by_clip.get(submission.clip_id)
        if record is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown clip {submission.clip_id}")
        if record.review is not None and not submission.force:
            raise HTTPException(status_code=409,
                                detail=f"clip {submission.clip_id} already reviewed")
        final_caption = submission.edited_caption or record.caption
        total_words = len(prompts.tokenize(final_caption))
        try:
            review = Review(
                verdict=submission.verdict,
                edited_caption=submission.edited_caption,
                modified_word_count=submission.modified_word_count,
                total_word_count=total_words,
                inaudible=submission.inaudible,
                reviewer=submission.reviewer,
                timestamp=datetime.now(timezone.utc).isoformat(),
            )
            updated = CaptionRecord(
                clip_id=record.clip_id,
                caption=record.caption,
                prompt_hash=record.prompt_hash,
                llm_model=record.llm_model,
                flags=record.flags,
                review=review,
            )
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        ws.append_caption(updated)
        return updated.to_dict()

    @app.get("/api/stats")
    def get_stats() -> dict:
        captions = ws.captions()
        if not captions:
            raise HTTPException(status_code=404, detail="workspace has no captions")
        payload: dict = {
            "corpus": store.compute_corpus_stats(captions, ws.place_lexicon).to_dict()
        }
        reviewed = [c for c in captions if c.review is not None]
        if reviewed:
            payload["manual_check"] = (
                store.compute_manual_check_stats(reviewed).to_dict())
        return payload

    @app.get("/api/samples/{clip_id}")
    def get_sample(clip_id: str) -> dict:
        by_clip = {c.clip_id: c for c in ws.captions()}
        record = by_clip.get(clip_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown clip {clip_id}")
        clues = ws.clues_by_clip()
        return {
            "clip_id": clip_id,
            "caption": record.caption,
            "clues": clues.get(clip_id, {}).get("clues", []),
            "flags": record.flags.to_dict(),
            "review": record.review.to_dict() if record.review else None,
        }

    return app
