import pytest
from fastapi.testclient import TestClient

from audiocap import cli, prompts, store
from audiocap.service import create_app

E2E_SEED = 7


@pytest.fixture
def workspace(tmp_path, e2e_dir):
    ws = tmp_path / "ws"
    ws.mkdir()
    assert cli.main(["--workspace", str(ws), "ingest",
                     str(e2e_dir / "clips_source.jsonl")]) == 0
    assert cli.main(["--workspace", str(ws), "--seed", str(E2E_SEED), "run",
                     "--fixtures", str(e2e_dir / "fixtures")]) == 0
    return ws


@pytest.fixture
def client(workspace):
    return TestClient(create_app(workspace, seed=11))


def _submit(client, clip_id, **overrides):
    body = {"clip_id": clip_id, "verdict": "correspond",
            "modified_word_count": 0, "inaudible": False, "reviewer": "alice"}
    body.update(overrides)
    return client.post("/api/review", json=body)


def test_queue_respects_limit(client):
    items = client.get("/api/queue", params={"limit": 10}).json()
    assert len(items) == 10
    assert {"clip_id", "caption", "clues", "flags"} <= set(items[0])


def test_queue_limit_zero_is_400(client):
    assert client.get("/api/queue", params={"limit": 0}).status_code == 400


def test_queue_empty_workspace_is_404(tmp_path):
    empty = tmp_path / "nothing"
    empty.mkdir()
    client = TestClient(create_app(empty))
    assert client.get("/api/queue").status_code == 404


def test_queue_order_is_seed_stable_and_shrinks(client):
    first = [i["clip_id"] for i in
             client.get("/api/queue", params={"limit": 15}).json()]
    again = [i["clip_id"] for i in
             client.get("/api/queue", params={"limit": 15}).json()]
    assert first == again
    assert _submit(client, first[0]).status_code == 200
    after = [i["clip_id"] for i in
             client.get("/api/queue", params={"limit": 15}).json()]
    assert after == first[1:]


def test_queue_includes_clues_for_context(client):
    item = client.get("/api/queue", params={"limit": 1}).json()[0]
    tools = {c["tool"] for c in item["clues"]}
    assert "dataset_labels" in tools
    assert len(tools) >= 6


def test_review_round_trip(client):
    clip_id = client.get("/api/queue", params={"limit": 1}).json()[0]["clip_id"]
    resp = _submit(client, clip_id)
    assert resp.status_code == 200
    record = resp.json()
    assert record["review"]["verdict"] == "correspond"
    assert record["review"]["total_word_count"] >= 1


def test_double_review_conflicts_without_force(client):
    clip_id = client.get("/api/queue", params={"limit": 1}).json()[0]["clip_id"]
    assert _submit(client, clip_id).status_code == 200
    assert _submit(client, clip_id).status_code == 409
    assert _submit(client, clip_id, force=True).status_code == 200


def test_edited_caption_requires_modified_words(client):
    clip_id = client.get("/api/queue", params={"limit": 1}).json()[0]["clip_id"]
    resp = _submit(client, clip_id, edited_caption="a fixed caption",
                   modified_word_count=0)
    assert resp.status_code == 422


def test_unknown_clip_is_404(client):
    assert _submit(client, "nope_0").status_code == 404


def test_bad_verdict_is_422(client):
    clip_id = client.get("/api/queue", params={"limit": 1}).json()[0]["clip_id"]
    assert _submit(client, clip_id, verdict="maybe").status_code == 422


def test_total_word_count_computed_from_final_caption(client, workspace):
    clip_id = client.get("/api/queue", params={"limit": 1}).json()[0]["clip_id"]
    edited = "A dog barks twice"
    resp = _submit(client, clip_id, verdict="not_correspond",
                   edited_caption=edited, modified_word_count=2)
    assert resp.status_code == 200
    assert resp.json()["review"]["total_word_count"] == \
        len(prompts.tokenize(edited))


def test_stats_match_store_computation(client, workspace):
    queue = client.get("/api/queue", params={"limit": 3}).json()
    _submit(client, queue[0]["clip_id"])
    _submit(client, queue[1]["clip_id"], verdict="not_correspond",
            edited_caption="a corrected caption here", modified_word_count=2,
            inaudible=True)
    payload = client.get("/api/stats").json()
    records = store.latest_captions(
        store.read_manifest(workspace / "captions.jsonl", "captions"))
    corpus = store.compute_corpus_stats(records, prompts.load_place_lexicon())
    reviewed = [r for r in records if r.review is not None]
    manual = store.compute_manual_check_stats(reviewed)
    assert payload["corpus"] == corpus.to_dict()
    assert payload["manual_check"] == manual.to_dict()
    assert payload["manual_check"]["n_reviewed"] == 2


def test_stats_without_reviews_has_no_manual_block(client):
    payload = client.get("/api/stats").json()
    assert "corpus" in payload
    assert "manual_check" not in payload


def test_single_correspond_review_gives_full_correspondence(client):
    clip_id = client.get("/api/queue", params={"limit": 1}).json()[0]["clip_id"]
    _submit(client, clip_id)
    payload = client.get("/api/stats").json()
    assert payload["manual_check"]["correspondence"] == 1.0


def test_sample_endpoint(client):
    clip_id = client.get("/api/queue", params={"limit": 1}).json()[0]["clip_id"]
    sample = client.get(f"/api/samples/{clip_id}").json()
    assert sample["clip_id"] == clip_id
    assert client.get("/api/samples/who_0").status_code == 404


def test_review_history_is_append_only(client, workspace):
    before = (workspace / "captions.jsonl").read_bytes()
    clip_id = client.get("/api/queue", params={"limit": 1}).json()[0]["clip_id"]
    _submit(client, clip_id)
    after = (workspace / "captions.jsonl").read_bytes()
    assert after.startswith(before)
    assert after.count(b"\n") == before.count(b"\n") + 1


def test_optional_bearer_token(workspace):
    client = TestClient(create_app(workspace, seed=11, auth_token="sesame"))
    # The token gate applies to review submission, the mutating endpoint.
    body = {"clip_id": "vg001_0", "verdict": "correspond",
            "modified_word_count": 0, "inaudible": False, "reviewer": "a"}
    denied = client.post("/api/review", json=body)
    assert denied.status_code == 401
    ok = client.post("/api/review", json=body,
                     headers={"Authorization": "Bearer sesame"})
    assert ok.status_code == 200
