import json
from pathlib import Path

import pytest

from audiocap.records import ClipRecord, MediaRefs, clip_id_for

FIXTURES_DIR = Path(__file__).parent / "fixtures"


def make_clip(video_id: str, start_s: float = 30, source: str = "audioset",
              labels: list[str] | None = None) -> ClipRecord:
    return ClipRecord(
        id=clip_id_for(video_id, start_s),
        source=source,
        video_id=video_id,
        start_s=start_s,
        dur_s=10.0,
        labels=labels if labels is not None else ["Engine"],
        media=MediaRefs(video_uri=f"media/video/{video_id}.mp4",
                        audio_uri=f"media/audio/{video_id}.wav"),
    )


def write_tool_fixture(fixtures_dir: Path, clip_id: str, tool: str,
                       payload: dict) -> Path:
    clip_dir = fixtures_dir / clip_id
    clip_dir.mkdir(parents=True, exist_ok=True)
    path = clip_dir / f"{tool}.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def standard_tool_fixtures(fixtures_dir: Path, clip_id: str,
                           caption: str = "An engine idles in a garage.") -> None:
    """Write a complete, well-formed fixture set for one clip."""
    write_tool_fixture(fixtures_dir, clip_id, "image_caption",
                       {"items": [{"text": "a car parked in a garage",
                                   "confidence": 0.92}]})
    write_tool_fixture(fixtures_dir, clip_id, "object_detection",
                       {"items": [{"text": "car", "confidence": 0.88},
                                  {"text": "person", "confidence": 0.41}]})
    write_tool_fixture(fixtures_dir, clip_id, "image_label",
                       {"items": [{"text": "sports car", "confidence": 0.77}]})
    write_tool_fixture(fixtures_dir, clip_id, "place",
                       {"items": [{"text": "garage", "confidence": 0.69}]})
    write_tool_fixture(fixtures_dir, clip_id, "audio_tags",
                       {"items": [{"text": "engine", "confidence": 0.87},
                                  {"text": "idling", "confidence": 0.65},
                                  {"text": "vehicle", "confidence": 0.44}]})
    write_tool_fixture(fixtures_dir, clip_id, "audio_caption",
                       {"items": [{"text": "an engine is idling"}]})
    write_tool_fixture(fixtures_dir, clip_id, "llm", {"caption": caption,
                                                      "model": "test-llm"})
    write_tool_fixture(fixtures_dir, clip_id, "sync",
                       {"pred_delta_s": [0.0, 0.0, 0.2, 0.4, 0.0]})


@pytest.fixture
def e2e_dir() -> Path:
    return FIXTURES_DIR / "e2e"
