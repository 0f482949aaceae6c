#!/usr/bin/env python3
"""Regenerate the bundled 20-clip end-to-end replay fixture.

Produces tests/fixtures/e2e/: a source manifest plus one replay fixture
directory per kept clip. The mix is fixed by design: 12 AudioSet clips of
which 3 fail the speech+music label rule and 2 fail all five sync trials,
plus 8 VGGSound clips, leaving 15 captioned clips and 5 removals.

Golden prompt files under tests/fixtures/golden/ are frozen by hand and are
NOT rewritten here.
"""

import json
import shutil
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from audiocap.records import ClipRecord, MediaRefs, clip_id_for, serialize_manifest

ROOT = Path(__file__).resolve().parents[1]
E2E = ROOT / "tests" / "fixtures" / "e2e"

SYNC_KEPT = [0.0, 0.2, 0.8, 1.0, 1.2]      # two good trials, three errors
SYNC_GOOD = [0.0, 0.0, 0.2, 0.4, 0.0]      # comfortably synchronized
SYNC_ALL_ERROR = [0.8, 1.0, 1.2, 2.0, 0.8]  # every trial outside tolerance

AUDIOSET = [
    # (video_id, labels, sync deltas or None, caption or None)
    ("as001", ["Speech", "Music"], None, None),
    ("as002", ["Music", "Speech", "Vehicle"], None, None),
    ("as003", ["Speech", "Music"], None, None),
    ("as004", ["Engine"], SYNC_ALL_ERROR, None),
    ("as005", ["Siren"], SYNC_ALL_ERROR, None),
    ("as006", ["Engine", "Truck"], SYNC_GOOD,
     "A heavy truck engine rumbles steadily while air brakes hiss on a busy street."),
    ("as007", ["Dog"], SYNC_KEPT,
     "A dog barks repeatedly in a backyard as birds chirp faintly nearby."),
    ("as008", ["Rain"], SYNC_GOOD,
     "Rain pours down steadily, splashing on pavement in an open street."),
    ("as009", ["Speech"], SYNC_GOOD,
     "A man speaks calmly to a small audience in a quiet conference room."),
    ("as010", ["Music"], SYNC_KEPT,
     "Upbeat electronic music plays with a pounding bass line in a club."),
    ("as011", ["Train"], SYNC_GOOD,
     "A train rattles over the tracks and sounds its horn near a station platform."),
    ("as012", ["Bird"], SYNC_GOOD,
     "Birds sing brightly in a garden while leaves rustle in a light wind."),
]

VGGSOUND = [
    ("vg001", "playing acoustic guitar",
     "A man sings softly while strumming an acoustic guitar in a music studio."),
    ("vg002", "waterfall burbling",
     "Water rushes over a waterfall and crashes into a pool in a forest."),
    ("vg003", "fire truck siren",
     "A red fire truck siren blares loudly as the vehicle speeds through a city street."),
    ("vg004", "cat meowing",
     "A cat meows insistently indoors while a person speaks gently to it."),
    ("vg005", "motorcycle revving",
     "A motorcycle engine revs up and down aggressively in an open garage."),
    ("vg006", "sea waves",
     "Ocean waves roll in and break softly on a sandy beach."),
    ("vg007", "typing on keyboard",
     "Rapid keyboard typing clatters in a quiet office room."),
    ("vg008", "church bells ringing",
     "Church bells ring out slowly and echo across a town square."),
]

TOOL_PAYLOADS = {
    "image_caption": lambda vid, hint: {"items": [
        {"text": f"a scene showing {hint}", "confidence": 0.91}]},
    "object_detection": lambda vid, hint: {"items": [
        {"text": hint.split()[0], "confidence": 0.84},
        {"text": "person", "confidence": 0.37}]},
    "image_label": lambda vid, hint: {"items": [
        {"text": hint.split()[-1], "confidence": 0.72}]},
    "place": lambda vid, hint: {"items": [
        {"text": "outdoor scene" if vid.startswith("as") else "indoor scene",
         "confidence": 0.64}]},
    "audio_caption": lambda vid, hint: {"items": [
        {"text": f"the sound of {hint} can be heard"}]},
}


def tags_for(vid: str, hint: str) -> dict:
    items = [{"text": hint.split()[0].lower(), "confidence": 0.88},
             {"text": "ambient noise", "confidence": 0.52},
             {"text": "background hum", "confidence": 0.31}]
    if vid == "as007":
        # Five raw predictions; the gateway must keep only the top three.
        items += [{"text": "wind", "confidence": 0.21},
                  {"text": "traffic", "confidence": 0.14}]
    return {"items": items}


def main() -> None:
    if E2E.exists():
        shutil.rmtree(E2E)
    fixtures = E2E / "fixtures"
    fixtures.mkdir(parents=True)

    clips = []
    kept = []
    for vid, labels, deltas, caption in AUDIOSET:
        clip = ClipRecord(id=clip_id_for(vid, 30), source="audioset",
                          video_id=vid, start_s=30, dur_s=10.0, labels=labels,
                          media=MediaRefs(f"media/video/{vid}.mp4",
                                          f"media/audio/{vid}.wav"))
        clips.append(clip)
        if deltas is not None:
            clip_dir = fixtures / clip.id
            clip_dir.mkdir()
            (clip_dir / "sync.json").write_text(
                json.dumps({"pred_delta_s": deltas}) + "\n")
        if caption is not None:
            kept.append((clip, labels[0].lower(), caption))
    for vid, label, caption in VGGSOUND:
        clip = ClipRecord(id=clip_id_for(vid, 0), source="vggsound",
                          video_id=vid, start_s=0, dur_s=10.0, labels=[label],
                          media=MediaRefs(f"media/video/{vid}.mp4",
                                          f"media/audio/{vid}.wav"))
        clips.append(clip)
        kept.append((clip, label, caption))

    for clip, hint, caption in kept:
        clip_dir = fixtures / clip.id
        clip_dir.mkdir(exist_ok=True)
        for tool, payload in TOOL_PAYLOADS.items():
            if clip.id == "as008_30" and tool == "place":
                # One deliberately failing tool: the pipeline must still
                # caption this clip from the remaining clues.
                body = {"error": "place service returned 503"}
            else:
                body = payload(clip.video_id, hint)
            (clip_dir / f"{tool}.json").write_text(json.dumps(body) + "\n")
        (clip_dir / "audio_tags.json").write_text(
            json.dumps(tags_for(clip.video_id, hint)) + "\n")
        (clip_dir / "llm.json").write_text(
            json.dumps({"caption": caption, "model": "fixture-llm-1"}) + "\n")

    (E2E / "clips_source.jsonl").write_bytes(serialize_manifest(clips))
    (E2E / "config.json").write_text(json.dumps({
        "seed": 7,
        "backend": "replay",
        "template_version": "v1",
        "parallelism": 4,
    }, indent=2) + "\n")
    print(f"wrote {len(clips)} clips, {len(kept)} fixture dirs under {E2E}")


if __name__ == "__main__":
    main()
