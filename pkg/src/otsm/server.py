"""Minimal HTTP inference service over an immutable model container.

Endpoints (JSON over UTF-8, CORS-enabled):
  GET  /health -> {"status": "ok"}
  GET  /meta   -> geometry count, parameter bounds, training contours
  POST /infer  -> {"theta", "lambda", "weights", "grid"?} ->
                  raster payload {width, height, origin, spacing,
                  values, levelset, mask, wall_ms}

The model is read-only; concurrent requests are serialized through a
bounded semaphore sized by the config's worker count.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .errors import BadWeights, OtsmError
from .geometry import BarycentricWeights, levelset_from_cloud, barycenter
from .grids import reference_grid
from .splat import ParticleCloud, evaluate_cloud
from .surrogate import ModelContainer, _predict_cloud, infer_cross_geometry

log = logging.getLogger("otsm.server")


def parameter_bounds(model: ModelContainer) -> np.ndarray:
    """(Q, 2) training bounds pooled over all per-geometry parameter sets."""
    stacked = np.vstack([ssm.params for ssm in model.ssms])
    return np.column_stack([stacked.min(axis=0), stacked.max(axis=0)])


def meta_payload(model: ModelContainer, contour_stride: int = 4) -> dict:
    cfg = model.config
    if "theta_min" in cfg:              # DoE bounds recorded at training time
        theta_b = [cfg["theta_min"], cfg["theta_max"]]
        lambda_b = [cfg["lambda_min"], cfg["lambda_max"]]
    else:                               # fall back to the sampled range
        bounds = parameter_bounds(model)
        theta_b = [bounds[0, 0], bounds[0, 1]]
        lambda_b = [bounds[1, 0], bounds[1, 1]]
    return {
        "k": model.n_geometries,
        "bounds": {"theta": theta_b, "lambda": lambda_b},
        "contours": [poly[::contour_stride].tolist() for poly in model.polygons],
        "n_s": model.ssms[0].n_s,
        "sigma_s": model.ssms[0].sigma_s,
        "grid": {"width": model.grid.nx, "height": model.grid.ny,
                 "origin": model.grid.origin.tolist(),
                 "spacing": model.grid.spacing.tolist()},
    }


def infer_payload(model: ModelContainer, body: dict) -> dict:
    """Run one inference request; raises BadWeights/ValueError on bad input."""
    try:
        theta = float(body["theta"])
        lam = float(body["lambda"])
        weights = [float(w) for w in body["weights"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"request needs numeric theta, lambda, weights: {exc}")
    if len(weights) != model.n_geometries:
        raise BadWeights(f"expected {model.n_geometries} weights, got {len(weights)}")
    w = BarycentricWeights(weights)
    param = np.array([theta, lam])

    t0 = time.perf_counter()
    if "grid" in body and body["grid"] is not None:
        nx, ny = int(body["grid"][0]), int(body["grid"][1])
        if not (2 <= nx <= 1024 and 2 <= ny <= 1024):
            raise ValueError("grid sizes must lie in [2, 1024]")
        grid = reference_grid(model.sgm.box, nx, ny)
        centers = np.zeros((model.ssms[0].n_s, 2))
        integral = 0.0
        for k, wk in enumerate(w.weights):
            if wk == 0.0:
                continue
            cloud_k, integral_k = _predict_cloud(model, k, param)
            centers += wk * cloud_k.centers
            integral += wk * integral_k
        cloud = ParticleCloud(centers=centers, sigma=model.ssms[0].sigma_s)
        levelset = levelset_from_cloud(barycenter(model.sgm.ensemble, w), grid)
        field = evaluate_cloud(cloud, grid)
        values = integral * field.values
        mask = levelset.values >= 0.5
        out_grid = grid
    else:
        field, levelset = infer_cross_geometry(model, param, w)
        values = field.values
        mask = field.grid.mask
        out_grid = field.grid
    wall_ms = (time.perf_counter() - t0) * 1000.0

    return {
        "width": out_grid.nx,
        "height": out_grid.ny,
        "origin": out_grid.origin.tolist(),
        "spacing": out_grid.spacing.tolist(),
        "values": values.ravel().tolist(),
        "levelset": levelset.values.ravel().tolist(),
        "mask": mask.ravel().astype(int).tolist(),
        "wall_ms": wall_ms,
    }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _send(self, code: int, payload: dict) -> None:
        blob = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(blob)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(blob)

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        model = self.server.model
        if model is None:
            self._send(503, {"code": "loading", "message": "model not ready"})
            return
        if self.path == "/health":
            self._send(200, {"status": "ok"})
        elif self.path == "/meta":
            self._send(200, meta_payload(model))
        else:
            self._send(404, {"code": "not_found", "message": self.path})

    def do_POST(self):
        model = self.server.model
        if model is None:
            self._send(503, {"code": "loading", "message": "model not ready"})
            return
        if self.path != "/infer":
            self._send(404, {"code": "not_found", "message": self.path})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length).decode() or "{}")
        except (ValueError, UnicodeDecodeError):
            self._send(400, {"code": "bad_request", "message": "invalid JSON body"})
            return
        try:
            with self.server.gate:
                payload = infer_payload(model, body)
        except BadWeights as exc:
            self._send(400, {"code": "bad_weights", "message": str(exc)})
        except (ValueError, OtsmError) as exc:
            self._send(400, {"code": "bad_request", "message": str(exc)})
        except Exception as exc:      # pragma: no cover - defensive
            log.exception("inference failed")
            self._send(500, {"code": "internal", "message": str(exc)})
        else:
            self._send(200, payload)


class InferenceServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, model: ModelContainer | None, workers: int = 4):
        super().__init__(address, _Handler)
        self.model = model
        self.gate = threading.Semaphore(max(1, workers))


def serve(model: ModelContainer, host: str = "127.0.0.1", port: int = 8787,
          workers: int = 4) -> None:
    """Run the service until interrupted (blocking)."""
    server = InferenceServer((host, port), model, workers=workers)
    log.info("serving on http://%s:%d", host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
