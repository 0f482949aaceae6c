import { describe, expect, it } from "vitest";

import { ApiError, ReviewApi } from "../src/api.js";

function fakeFetch(routes: Record<string, [number, unknown]>): typeof fetch {
  return async (input: RequestInfo | URL) => {
    const url = String(input);
    for (const [path, [status, body]] of Object.entries(routes)) {
      if (url.includes(path)) {
        return new Response(JSON.stringify(body), { status });
      }
    }
    return new Response("{}", { status: 500 });
  };
}

describe("ReviewApi", () => {
  it("returns the first queue item", async () => {
    const api = new ReviewApi(
      "http://svc",
      fakeFetch({ "/api/queue": [200, [{ clip_id: "a" }]] }),
    );
    const item = await api.nextItem();
    expect(item?.clip_id).toBe("a");
  });

  it("maps an empty queue and a missing workspace to null", async () => {
    const empty = new ReviewApi("http://svc",
                                fakeFetch({ "/api/queue": [200, []] }));
    expect(await empty.nextItem()).toBeNull();
    const missing = new ReviewApi(
      "http://svc",
      fakeFetch({ "/api/queue": [404, { detail: "no captions" }] }),
    );
    expect(await missing.nextItem()).toBeNull();
  });

  it("throws ApiError with the service detail", async () => {
    const api = new ReviewApi(
      "http://svc",
      fakeFetch({ "/api/review": [409, { detail: "already reviewed" }] }),
    );
    await api
      .submit({
        clip_id: "a",
        verdict: "correspond",
        modified_word_count: 0,
        inaudible: false,
        reviewer: "r",
      })
      .then(
        () => {
          throw new Error("expected rejection");
        },
        (err) => {
          expect(err).toBeInstanceOf(ApiError);
          expect(err.status).toBe(409);
          expect(err.message).toBe("already reviewed");
        },
      );
  });

  it("propagates network failures", async () => {
    const api = new ReviewApi("http://svc", async () => {
      throw new TypeError("fetch failed");
    });
    await expect(api.nextItem()).rejects.toThrow("fetch failed");
  });
});
