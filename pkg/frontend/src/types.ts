/** Payload schemas of the inference service (GET /meta, POST /infer). */

export interface Meta {
  k: number;
  bounds: { theta: [number, number]; lambda: [number, number] };
  contours: [number, number][][];
  n_s: number;
  sigma_s: number;
  grid: {
    width: number;
    height: number;
    origin: [number, number];
    spacing: [number, number];
  };
}

export interface InferRequest {
  theta: number;
  lambda: number;
  weights: number[];
  grid?: [number, number];
}

export interface InferResponse {
  width: number;
  height: number;
  origin: [number, number];
  spacing: [number, number];
  values: number[];
  levelset: number[];
  mask: number[];
  wall_ms: number;
}

export interface Summary {
  min: number;
  max: number;
  integral: number;
  wallMs: number;
}
