/** Golden-path tests against stored responses from the bundled demo model.
 *
 * The fixtures in tests/golden/ were produced by demo/make_demo.py: each
 * holds an /infer request for a slider preset (one-hot x4, equal 0.25x4),
 * the service response, and independently computed summary statistics.
 * The UI renders response values untouched (pre-colormap), so the checks
 * compare our request construction and summary arithmetic against the
 * service within 1e-9.
 */

import { readdirSync, readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { rasterToRGBA } from "../src/render.js";
import { applyMeta, buildRequest, initialState, setWeight, summarize } from "../src/state.js";
import type { InferRequest, InferResponse, Meta } from "../src/types.js";

interface Golden {
  request: InferRequest;
  response: InferResponse;
  summary: { min: number; max: number; integral: number };
}

const goldenDir = join(dirname(fileURLToPath(import.meta.url)), "golden");
const files = readdirSync(goldenDir).filter((f) => f.endsWith(".json"));
const goldens = new Map<string, Golden>(
  files.map((f) => [f.replace(".json", ""), JSON.parse(readFileSync(join(goldenDir, f), "utf-8"))]),
);

const demoMeta: Meta = {
  k: 4,
  bounds: { theta: [0.157, 1.414], lambda: [0.05, 0.6] },
  contours: [],
  n_s: 60,
  sigma_s: 0.05,
  grid: { width: 64, height: 64, origin: [0, 0], spacing: [0.05, 0.05] },
};

describe("golden fixtures", () => {
  it("cover the one-hot and equal-weight presets", () => {
    expect(files.length).toBe(5);
    for (const name of ["one_hot_0", "one_hot_1", "one_hot_2", "one_hot_3", "equal"]) {
      expect(goldens.has(name)).toBe(true);
    }
  });

  it("preset requests built by the UI match the stored requests within 1e-12", () => {
    for (const [name, golden] of goldens) {
      let state = applyMeta(initialState(), demoMeta);
      state = { ...state, theta: golden.request.theta, lambda: golden.request.lambda };
      if (name.startsWith("one_hot_")) {
        const k = Number(name.slice(-1));
        state = { ...state, weights: setWeight(state.weights, k, 1.0) };
      } // equal preset is applyMeta's default 0.25 x 4
      const request = buildRequest(state);
      expect(request.theta).toBe(golden.request.theta);
      expect(request.lambda).toBe(golden.request.lambda);
      request.weights.forEach((w, i) => {
        expect(Math.abs(w - golden.request.weights[i])).toBeLessThan(1e-12);
      });
      const total = request.weights.reduce((a, b) => a + b, 0);
      expect(Math.abs(total - 1)).toBeLessThan(1e-12);
    }
  });

  it("summary arithmetic agrees with the service within 1e-9 pre-colormap", () => {
    for (const golden of goldens.values()) {
      const summary = summarize(golden.response);
      expect(Math.abs(summary.min - golden.summary.min)).toBeLessThan(1e-9);
      expect(Math.abs(summary.max - golden.summary.max)).toBeLessThan(1e-9);
      expect(Math.abs(summary.integral - golden.summary.integral)).toBeLessThan(1e-9);
    }
  });

  it("rendering a golden response twice gives identical pixels", () => {
    const golden = goldens.get("equal")!;
    const summary = summarize(golden.response);
    const a = rasterToRGBA(golden.response.values, golden.response.mask, 0, summary.max);
    const b = rasterToRGBA(golden.response.values, golden.response.mask, 0, summary.max);
    expect(Buffer.from(a.buffer).equals(Buffer.from(b.buffer))).toBe(true);
  });

  it("responses are internally consistent", () => {
    for (const golden of goldens.values()) {
      const { mask, values, width, height } = golden.response;
      expect(values.length).toBe(width * height);
      for (const m of mask) expect(m === 0 || m === 1).toBe(true);
      for (const v of values) expect(v).toBeGreaterThanOrEqual(0);
    }
    // blended responses mask by the reconstructed level-set; one-hot
    // responses use the true training-domain mask instead
    const equal = goldens.get("equal")!;
    equal.response.levelset.forEach((phi, i) => {
      expect(equal.response.mask[i]).toBe(phi >= 0.5 ? 1 : 0);
    });
  });
});
