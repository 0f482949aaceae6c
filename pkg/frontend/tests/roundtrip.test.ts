// End-to-end round trip against the real review service: build a replay
// workspace with the pipeline CLI, serve it over HTTP, submit a review
// through the UI session, and check the displayed ratios against a direct
// statistics computation on the workspace files.

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { ReviewSession } from "../src/state.js";

const REPO = resolve(__dirname, "..", "..");
const E2E = join(REPO, "tests", "fixtures", "e2e");
const PORT = 8750 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;

let workspace: string;
let server: ChildProcess;

function py(code: string, ...args: string[]): string {
  return execFileSync("python3", ["-c", code, ...args], {
    encoding: "utf-8",
    env: { ...process.env, PYTHONPATH: join(REPO, "src") },
  });
}

async function waitForServer(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${BASE}/api/stats`);
      if (resp.status === 200) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error("review service did not come up");
}

beforeAll(async () => {
  workspace = mkdtempSync(join(tmpdir(), "review-ui-ws-"));
  py(
    `
import sys
from audiocap import cli
ws, e2e = sys.argv[1], sys.argv[2]
assert cli.main(["--workspace", ws, "ingest", e2e + "/clips_source.jsonl"]) == 0
assert cli.main(["--workspace", ws, "--seed", "7", "run",
                 "--fixtures", e2e + "/fixtures"]) == 0
`,
    workspace,
    E2E,
  );
  server = spawn(
    "python3",
    [
      "-c",
      `
import sys, uvicorn
from audiocap.service import create_app
uvicorn.run(create_app(sys.argv[1], seed=11), host="127.0.0.1",
            port=int(sys.argv[2]), log_level="warning")
`,
      workspace,
      String(PORT),
    ],
    { env: { ...process.env, PYTHONPATH: join(REPO, "src") }, stdio: "ignore" },
  );
  await waitForServer();
}, 60_000);

afterAll(() => {
  server?.kill();
  if (workspace) rmSync(workspace, { recursive: true, force: true });
});

function directStoreStats(): Record<string, unknown> {
  const out = py(
    `
import json, sys
from audiocap import prompts, store
records = store.latest_captions(
    store.read_manifest(sys.argv[1] + "/captions.jsonl", "captions"))
payload = {"corpus": store.compute_corpus_stats(
    records, prompts.load_place_lexicon()).to_dict()}
reviewed = [r for r in records if r.review is not None]
if reviewed:
    payload["manual_check"] = store.compute_manual_check_stats(reviewed).to_dict()
print(json.dumps(payload))
`,
    workspace,
  );
  return JSON.parse(out);
}

describe("review round trip against the live service", () => {
  it("submits through the UI and the stats panel matches the store", async () => {
    const api = new ReviewApi(BASE);
    const session = new ReviewSession(api, "ui-tester");
    await session.loadNext();
    expect(session.screen.kind).toBe("review");
    expect(session.stats?.manual_check).toBeUndefined();
    const firstClip = session.item!.clip_id;

    session.setVerdict("correspond");
    await session.submit();

    // One fetch cycle after the 200: the panel already shows the review.
    expect(session.stats?.manual_check?.n_reviewed).toBe(1);
    expect(session.stats?.manual_check?.correspondence).toBe(1.0);
    expect(session.item?.clip_id).not.toBe(firstClip);

    // Displayed numbers equal a direct computation on the workspace files.
    expect(session.stats).toEqual(directStoreStats());
  }, 30_000);

  it("submits an edit whose word-diff count survives the wire", async () => {
    const api = new ReviewApi(BASE);
    const session = new ReviewSession(api, "ui-tester");
    await session.loadNext();
    const original = session.item!.caption;

    session.setVerdict("not_correspond");
    session.startEditing();
    session.setEditBuffer(`${original} at night`);
    const shown = session.effectiveModifiedCount();
    expect(shown).toBeGreaterThanOrEqual(1);

    await session.submit();
    expect(session.inlineError).toBeNull();
    expect(session.stats?.manual_check?.n_reviewed).toBe(2);
    expect(session.stats).toEqual(directStoreStats());

    const manual = session.stats!.manual_check!;
    expect(manual.modification).toBeGreaterThan(0);
  }, 30_000);

  it("answers 409 on a double review and the form survives", async () => {
    const api = new ReviewApi(BASE);
    const session = new ReviewSession(api, "ui-tester");
    await session.loadNext();
    const reviewedClip = JSON.parse(
      py(
        `
import json, sys
from audiocap import store
records = store.latest_captions(
    store.read_manifest(sys.argv[1] + "/captions.jsonl", "captions"))
print(json.dumps([r.clip_id for r in records if r.review is not None]))
`,
        workspace,
      ),
    )[0];
    await api
      .submit({
        clip_id: reviewedClip,
        verdict: "correspond",
        modified_word_count: 0,
        inaudible: false,
        reviewer: "ui-tester",
      })
      .then(
        () => {
          throw new Error("expected a 409");
        },
        (err) => expect(err.status).toBe(409),
      );
  }, 30_000);
});
