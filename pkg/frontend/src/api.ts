/** Service client: /meta, sequence-numbered /infer, stale-response discard. */

import type { InferRequest, InferResponse, Meta } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export async function loadMeta(serviceUrl: string, fetchImpl: FetchLike = fetch): Promise<Meta> {
  const resp = await fetchImpl(`${serviceUrl}/meta`);
  if (!resp.ok) {
    throw new ServiceError("meta_failed", `GET /meta -> ${resp.status}`);
  }
  return (await resp.json()) as Meta;
}

/**
 * At most one logical stream of /infer requests; every request gets an
 * increasing sequence number and responses that arrive after a newer
 * request was issued are dropped.
 */
export class InferClient {
  private seq = 0;
  private applied = 0;
  requestCount = 0;

  constructor(
    private serviceUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  /** POST the request; resolve with the response, or null if superseded. */
  async infer(request: InferRequest): Promise<InferResponse | null> {
    const mySeq = ++this.seq;
    this.requestCount++;
    const resp = await this.fetchImpl(`${this.serviceUrl}/infer`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!resp.ok) {
      const body = (await resp.json().catch(() => ({}))) as {
        code?: string;
        message?: string;
      };
      throw new ServiceError(body.code ?? "http_error", body.message ?? `status ${resp.status}`);
    }
    const payload = (await resp.json()) as InferResponse;
    if (mySeq < this.seq || mySeq <= this.applied) {
      return null; // a newer request exists or already rendered: stale
    }
    this.applied = mySeq;
    return payload;
  }
}
