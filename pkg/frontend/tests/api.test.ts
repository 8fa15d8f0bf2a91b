import { describe, expect, it } from "vitest";

import { InferClient, loadMeta, ServiceError } from "../src/api.js";
import type { FetchLike } from "../src/api.js";
import type { InferResponse } from "../src/types.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function fakeInferResponse(tag: number): InferResponse {
  return {
    width: 1,
    height: 1,
    origin: [0, 0],
    spacing: [1, 1],
    values: [tag],
    levelset: [1],
    mask: [1],
    wall_ms: 0,
  };
}

describe("loadMeta", () => {
  it("returns the parsed meta payload", async () => {
    const fetchImpl: FetchLike = async (url) => {
      expect(url).toBe("http://svc/meta");
      return jsonResponse(200, { k: 4, bounds: { theta: [0, 1], lambda: [0, 1] } });
    };
    const meta = await loadMeta("http://svc", fetchImpl);
    expect(meta.k).toBe(4);
  });

  it("throws ServiceError on a non-200", async () => {
    const fetchImpl: FetchLike = async () => jsonResponse(503, { code: "loading" });
    await expect(loadMeta("http://svc", fetchImpl)).rejects.toThrow(ServiceError);
  });
});

describe("InferClient sequencing", () => {
  it("discards a response that resolves after a newer request", async () => {
    const resolvers: ((r: Response) => void)[] = [];
    const fetchImpl: FetchLike = () =>
      new Promise<Response>((resolve) => resolvers.push(resolve));
    const client = new InferClient("http://svc", fetchImpl);
    const request = { theta: 0.5, lambda: 0.1, weights: [1] };

    const first = client.infer(request);
    const second = client.infer(request);
    // the second (newer) request resolves before the first
    resolvers[1](jsonResponse(200, fakeInferResponse(2)));
    const newer = await second;
    expect(newer?.values).toEqual([2]);
    resolvers[0](jsonResponse(200, fakeInferResponse(1)));
    expect(await first).toBeNull(); // stale: superseded by sequence number
    expect(client.requestCount).toBe(2);
  });

  it("applies in-order responses normally", async () => {
    const fetchImpl: FetchLike = async () => jsonResponse(200, fakeInferResponse(7));
    const client = new InferClient("http://svc", fetchImpl);
    const out = await client.infer({ theta: 0, lambda: 0.1, weights: [1] });
    expect(out?.values).toEqual([7]);
  });

  it("surfaces machine-readable error codes", async () => {
    const fetchImpl: FetchLike = async () =>
      jsonResponse(400, { code: "bad_weights", message: "weights must sum to 1" });
    const client = new InferClient("http://svc", fetchImpl);
    await expect(
      client.infer({ theta: 0, lambda: 0.1, weights: [0.5, 0.4] }),
    ).rejects.toMatchObject({ code: "bad_weights" });
  });
});
