/** DOM wiring: sliders -> debounced /infer -> canvas heatmap + contour. */

import { InferClient, loadMeta, ServiceError } from "./api.js";
import { debounce } from "./debounce.js";
import { contourSegments, diffToRGBA, rasterToRGBA } from "./render.js";
import {
  applyMeta,
  buildRequest,
  differenceRaster,
  type ExplorerState,
  initialState,
  pinCurrent,
  pushHistory,
  restoreEntry,
  setWeight,
  summarize,
  weightSum,
} from "./state.js";
import type { InferResponse, Meta } from "./types.js";

const DEBOUNCE_MS = 150;
const SCALE = 4; // canvas pixels per grid cell

let state: ExplorerState = initialState();
let client: InferClient | null = null;

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

function banner(message: string | null): void {
  const el = $<HTMLDivElement>("banner");
  el.textContent = message ?? "";
  el.style.display = message ? "block" : "none";
}

function drawRaster(
  canvas: HTMLCanvasElement,
  rgba: Uint8ClampedArray,
  width: number,
  height: number,
  contour: ReturnType<typeof contourSegments> | null,
): void {
  canvas.width = width * SCALE;
  canvas.height = height * SCALE;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const image = new ImageData(new Uint8ClampedArray(rgba), width, height);
  // draw at 1:1 then scale up; y axis flipped so the origin sits bottom-left
  const off = document.createElement("canvas");
  off.width = width;
  off.height = height;
  off.getContext("2d")?.putImageData(image, 0, 0);
  ctx.save();
  ctx.imageSmoothingEnabled = false;
  ctx.translate(0, canvas.height);
  ctx.scale(SCALE, -SCALE);
  ctx.drawImage(off, 0, 0);
  ctx.restore();
  if (contour) {
    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    for (const [x0, y0, x1, y1] of contour) {
      ctx.moveTo((x0 + 0.5) * SCALE, canvas.height - (y0 + 0.5) * SCALE);
      ctx.lineTo((x1 + 0.5) * SCALE, canvas.height - (y1 + 0.5) * SCALE);
    }
    ctx.stroke();
  }
}

function renderResponse(response: InferResponse): void {
  const summary = summarize(response);
  const lo = 0;
  const hi = summary.max > 0 ? summary.max : 1;
  const rgba = rasterToRGBA(response.values, response.mask, lo, hi);
  const contour = contourSegments(response.levelset, response.width, response.height, 0.5);
  drawRaster($<HTMLCanvasElement>("field"), rgba, response.width, response.height, contour);
  $("summary").textContent =
    `min ${summary.min.toPrecision(4)}  max ${summary.max.toPrecision(4)}  ` +
    `integral ${summary.integral.toPrecision(4)}  wall ${summary.wallMs.toFixed(1)} ms`;
  renderComparison();
}

function renderComparison(): void {
  const panel = $<HTMLDivElement>("compare");
  if (!state.pinned || !state.lastResponse) {
    panel.style.display = "none";
    return;
  }
  panel.style.display = "block";
  const diff = differenceRaster(state.lastResponse, state.pinned.response);
  if (!diff) return;
  const scale = Math.max(...diff.map(Math.abs));
  drawRaster(
    $<HTMLCanvasElement>("diff"),
    diffToRGBA(diff, scale),
    state.lastResponse.width,
    state.lastResponse.height,
    null,
  );
  const live = summarize(state.lastResponse);
  const pin = state.pinned.summary;
  $("compare-summary").textContent =
    `Δmax ${(live.max - pin.max).toPrecision(3)}  ` +
    `Δintegral ${(live.integral - pin.integral).toPrecision(3)}  ` +
    `|diff|max ${scale.toPrecision(3)}`;
}

function renderHistory(): void {
  const list = $<HTMLUListElement>("history");
  list.innerHTML = "";
  state.history.forEach((entry, i) => {
    const item = document.createElement("li");
    const w = entry.weights.map((x) => x.toFixed(2)).join(",");
    item.textContent = `#${i + 1} θ=${entry.theta.toFixed(3)} Λ=${entry.lambda.toFixed(3)} w=[${w}]`;
    item.onclick = () => {
      state = restoreEntry(state, i);
      syncControls();
      if (state.lastResponse) renderResponse(state.lastResponse);
    };
    list.appendChild(item);
  });
}

function syncControls(): void {
  const meta = state.meta;
  if (!meta) return;
  state.weights.forEach((w, i) => {
    $<HTMLInputElement>(`w${i}`).value = String(w);
    $(`w${i}-label`).textContent = w.toFixed(3);
  });
  $<HTMLInputElement>("theta").value = String(state.theta);
  $("theta-label").textContent = state.theta.toFixed(3);
  $<HTMLInputElement>("lambda").value = String(state.lambda);
  $("lambda-label").textContent = state.lambda.toFixed(3);
  $("weight-sum").textContent = `Σw = ${weightSum(state.weights).toFixed(6)}`;
}

const requestNow = async (): Promise<void> => {
  if (!client) return;
  state.inFlight = true;
  try {
    const response = await client.infer(buildRequest(state));
    if (response) {
      state = pushHistory(state, response);
      renderResponse(response);
      renderHistory();
      banner(null);
    }
  } catch (err) {
    banner(err instanceof ServiceError ? `${err.code}: ${err.message}` : String(err));
  } finally {
    state.inFlight = false;
  }
};

const requestDebounced = debounce(() => void requestNow(), DEBOUNCE_MS);

function buildControls(meta: Meta): void {
  const host = $<HTMLDivElement>("weights");
  host.innerHTML = "";
  for (let i = 0; i < meta.k; i++) {
    const row = document.createElement("div");
    row.className = "slider-row";
    row.innerHTML =
      `<span>ω${i}</span>` +
      `<input id="w${i}" type="range" min="0" max="1" step="0.001">` +
      `<span id="w${i}-label"></span>`;
    host.appendChild(row);
    $<HTMLInputElement>(`w${i}`).oninput = (ev) => {
      const value = Number((ev.target as HTMLInputElement).value);
      state = { ...state, weights: setWeight(state.weights, i, value) };
      syncControls();
      requestDebounced();
    };
  }
  const theta = $<HTMLInputElement>("theta");
  theta.min = String(meta.bounds.theta[0]);
  theta.max = String(meta.bounds.theta[1]);
  theta.step = "0.001";
  theta.oninput = () => {
    state = { ...state, theta: Number(theta.value) };
    syncControls();
    requestDebounced();
  };
  const lambda = $<HTMLInputElement>("lambda");
  lambda.min = String(meta.bounds.lambda[0]);
  lambda.max = String(meta.bounds.lambda[1]);
  lambda.step = "0.001";
  lambda.oninput = () => {
    state = { ...state, lambda: Number(lambda.value) };
    syncControls();
    requestDebounced();
  };
  drawThumbnails(meta);
}

function drawThumbnails(meta: Meta): void {
  const host = $<HTMLDivElement>("thumbnails");
  host.innerHTML = "";
  meta.contours.forEach((poly, i) => {
    const canvas = document.createElement("canvas");
    canvas.width = 72;
    canvas.height = 72;
    canvas.title = `geometry ${i}`;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const xs = poly.map((p) => p[0]);
    const ys = poly.map((p) => p[1]);
    const lo = [Math.min(...xs), Math.min(...ys)];
    const span = Math.max(Math.max(...xs) - lo[0], Math.max(...ys) - lo[1]) || 1;
    ctx.strokeStyle = "#8be9fd";
    ctx.beginPath();
    poly.forEach(([x, y], j) => {
      const px = 8 + (56 * (x - lo[0])) / span;
      const py = 64 - (56 * (y - lo[1])) / span;
      if (j === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.closePath();
    ctx.stroke();
    host.appendChild(canvas);
  });
}

async function connect(): Promise<void> {
  const url = $<HTMLInputElement>("service-url").value.replace(/\/$/, "");
  try {
    const meta = await loadMeta(url);
    client = new InferClient(url);
    state = applyMeta(initialState(), meta);
    buildControls(meta);
    syncControls();
    banner(null);
    $<HTMLDivElement>("controls").style.display = "block";
    await requestNow();
  } catch (err) {
    client = null;
    $<HTMLDivElement>("controls").style.display = "none";
    banner(`cannot reach service: ${String(err)} — check the URL and retry`);
  }
}

export function boot(): void {
  $<HTMLButtonElement>("connect").onclick = () => void connect();
  $<HTMLButtonElement>("pin").onclick = () => {
    state = pinCurrent(state);
    renderComparison();
  };
  $<HTMLButtonElement>("preset-equal").onclick = () => {
    if (!state.meta) return;
    state = { ...state, weights: new Array(state.meta.k).fill(1 / state.meta.k) };
    syncControls();
    requestDebounced();
  };
}

if (typeof document !== "undefined" && document.getElementById("connect")) {
  boot();
}
