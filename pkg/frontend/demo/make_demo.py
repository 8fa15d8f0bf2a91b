"""Build the bundled demo model and the golden response fixtures.

Trains a small 4-geometry model (fast, deterministic) with the otsm
package, saves it as demo/model.otsm, and records golden /infer responses
for the slider presets (each one-hot plus equal weights) under
tests/golden/.  Each fixture stores the request, the full response, and
masked summary statistics so the TypeScript tests can cross-check their
own arithmetic against the service within 1e-9.

Run from the frontend/ directory:  python3 demo/make_demo.py
"""

import json
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN = os.path.join(HERE, "..", "tests", "golden")

DEMO_CFG = """\
[dataset]
k_geometries = 4
snapshots_per_geometry = 6
grid_nx = 64
grid_ny = 64

[splat]
n_s = 60
sigma_s = 0.05

[geometry]
n_g = 60
sigma_g = 0.04
geometry_polish_iters = 500

[regression]
degree = 1

[matching]
generations = 30
"""


def main():
    import tempfile

    from otsm.cli import main as otsm_main
    from otsm.formats import load_model
    from otsm.server import infer_payload

    model_path = os.path.join(HERE, "model.otsm")
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "demo.cfg")
        with open(cfg, "w", encoding="utf-8") as fh:
            fh.write(DEMO_CFG)
        dataset = os.path.join(tmp, "dataset")
        assert otsm_main(["generate", "--config", cfg, "--out", dataset]) == 0
        assert otsm_main(["train", "--config", cfg, "--dataset", dataset,
                          "--out", model_path]) == 0
    model = load_model(model_path)

    presets = {f"one_hot_{k}": [1.0 if i == k else 0.0 for i in range(4)]
               for k in range(4)}
    presets["equal"] = [0.25, 0.25, 0.25, 0.25]

    os.makedirs(GOLDEN, exist_ok=True)
    theta, lam = 0.8, 0.3
    for name, weights in presets.items():
        request = {"theta": theta, "lambda": lam, "weights": weights}
        response = infer_payload(model, request)
        response["wall_ms"] = 0.0          # timing is not part of the fixture
        sx, sy = response["spacing"]
        inside = [v for v, m in zip(response["values"], response["mask"]) if m]
        summary = {
            "min": min(inside),
            "max": max(inside),
            "integral": sum(inside) * sx * sy,
        }
        with open(os.path.join(GOLDEN, f"{name}.json"), "w", encoding="utf-8") as fh:
            json.dump({"request": request, "response": response,
                       "summary": summary}, fh)
        print(f"golden {name}: {len(response['values'])} values,"
              f" integral {summary['integral']:.6f}")
    print(f"demo model -> {model_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
