/** Explorer state: sliders, weight coupling, history, and pin/compare. */

import type { InferRequest, InferResponse, Meta, Summary } from "./types.js";

export interface HistoryEntry {
  weights: number[];
  theta: number;
  lambda: number;
  summary: Summary;
  response: InferResponse;
}

export interface ExplorerState {
  meta: Meta | null;
  weights: number[];
  theta: number;
  lambda: number;
  lastResponse: InferResponse | null;
  inFlight: boolean;
  history: HistoryEntry[];
  pinned: HistoryEntry | null;
}

export function initialState(): ExplorerState {
  return {
    meta: null,
    weights: [],
    theta: 0,
    lambda: 0,
    lastResponse: null,
    inFlight: false,
    history: [],
    pinned: null,
  };
}

export function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

/** Apply service metadata: one weight slider per geometry (equal weights),
 * parameter sliders initialized to mid-range. */
export function applyMeta(state: ExplorerState, meta: Meta): ExplorerState {
  const k = meta.k;
  return {
    ...state,
    meta,
    weights: new Array(k).fill(1 / k),
    theta: 0.5 * (meta.bounds.theta[0] + meta.bounds.theta[1]),
    lambda: 0.5 * (meta.bounds.lambda[0] + meta.bounds.lambda[1]),
  };
}

/**
 * Set weight `index` to `value` and rescale the other weights
 * proportionally so the total stays exactly 1.  If the others are all
 * zero, the remainder is split equally among them.
 */
export function setWeight(weights: number[], index: number, value: number): number[] {
  const v = clamp(value, 0, 1);
  const out = weights.slice();
  const othersSum = weights.reduce((acc, w, i) => (i === index ? acc : acc + w), 0);
  const rest = 1 - v;
  for (let i = 0; i < out.length; i++) {
    if (i === index) {
      out[i] = v;
    } else if (othersSum > 0) {
      out[i] = (weights[i] / othersSum) * rest;
    } else {
      out[i] = rest / (out.length - 1);
    }
  }
  return renormalize(out);
}

/** Divide by the total so the payload sums to 1 within 1e-12. */
export function renormalize(weights: number[]): number[] {
  const total = weights.reduce((a, b) => a + b, 0);
  if (total <= 0) {
    return new Array(weights.length).fill(1 / weights.length);
  }
  return weights.map((w) => w / total);
}

export function weightSum(weights: number[]): number {
  return weights.reduce((a, b) => a + b, 0);
}

export function buildRequest(state: ExplorerState): InferRequest {
  return {
    theta: state.theta,
    lambda: state.lambda,
    weights: renormalize(state.weights),
  };
}

export function summarize(response: InferResponse): Summary {
  const [sx, sy] = response.spacing;
  let min = Infinity;
  let max = -Infinity;
  let sum = 0;
  for (let i = 0; i < response.values.length; i++) {
    const v = response.values[i];
    if (response.mask[i]) {
      if (v < min) min = v;
      if (v > max) max = v;
      sum += v;
    }
  }
  return { min, max, integral: sum * sx * sy, wallMs: response.wall_ms };
}

export function pushHistory(state: ExplorerState, response: InferResponse): ExplorerState {
  const entry: HistoryEntry = {
    weights: state.weights.slice(),
    theta: state.theta,
    lambda: state.lambda,
    summary: summarize(response),
    response,
  };
  return { ...state, lastResponse: response, history: [...state.history, entry] };
}

export function pinCurrent(state: ExplorerState): ExplorerState {
  const last = state.history[state.history.length - 1];
  return last ? { ...state, pinned: last } : state;
}

/** Restore controls and render state from a history entry. */
export function restoreEntry(state: ExplorerState, index: number): ExplorerState {
  const entry = state.history[index];
  if (!entry) return state;
  return {
    ...state,
    weights: entry.weights.slice(),
    theta: entry.theta,
    lambda: entry.lambda,
    lastResponse: entry.response,
  };
}

/** Signed difference raster (live minus pinned); null on shape mismatch. */
export function differenceRaster(
  live: InferResponse,
  pinned: InferResponse,
): number[] | null {
  if (live.width !== pinned.width || live.height !== pinned.height) return null;
  return live.values.map((v, i) => v - pinned.values[i]);
}
