"""Command-line entry point: dataset generation, training, inference,
reference solves, the matching benchmark, and the HTTP service.

Exit codes: 0 success, 1 internal error, 2 usage or validation error.
The OTS_LOG environment variable sets the log level (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, dump_config, load_config, save_config
from .errors import BadWeights, OtsmError
from .formats import (read_polygon_csv, read_raster, save_model, load_model,
                      write_polygon_csv, write_raster)
from .geometry import (BarycentricWeights, domain_from_polygon,
                       random_star_domain, reference_box_for)
from .grids import reference_grid
from .heat import HeatProblem, lhs_sample, solve
from .matching import match_multi
from .splat import ParticleCloud
from .surrogate import infer_cross_geometry, train

log = logging.getLogger("otsm")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig().validate()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    config = _load_run_config(args)
    out = args.out
    os.makedirs(out, exist_ok=True)

    polys = [random_star_domain(seed=config.seed + k, config=config.star_config())
             for k in range(config.k_geometries)]
    box = reference_box_for(polys, margin=config.box_margin)
    grid = reference_grid(box, config.grid_nx, config.grid_ny)
    plan = lhs_sample(config.bounds(), config.snapshots_per_geometry,
                      seed=config.seed)

    files = []
    for k, poly in enumerate(polys):
        path = os.path.join(out, f"geometry_{k:02d}.csv")
        write_polygon_csv(path, poly)
        files.append(os.path.basename(path))
    doe_path = os.path.join(out, "doe.csv")
    with open(doe_path, "w", encoding="utf-8") as fh:
        fh.write("theta,lambda\n")
        for theta, lam in plan.samples:
            fh.write(f"{float(theta)!r},{float(lam)!r}\n")
    files.append(os.path.basename(doe_path))

    for k, poly in enumerate(polys):
        dom = domain_from_polygon(poly, grid, steepness=config.steepness)
        for p, (theta, lam) in enumerate(plan.samples):
            problem = HeatProblem(domain=dom, theta=float(theta), lam=float(lam),
                                  kappa=config.kappa, tf=config.t_final,
                                  n_steps=config.n_steps,
                                  bc_distance_power=config.bc_distance_power,
                                  grid=grid)
            snap = solve(problem)
            path = os.path.join(out, f"snap_{k:02d}_{p:02d}.otr")
            write_raster(path, snap)
            files.append(os.path.basename(path))
            log.info("solved geometry %d snapshot %d", k, p)

    save_config(os.path.join(out, "config.cfg"), config)
    files.append("config.cfg")
    manifest = {
        "version": __version__,
        "seed": config.seed,
        "box": [float(v) for v in box],
        "k_geometries": config.k_geometries,
        "snapshots_per_geometry": config.snapshots_per_geometry,
        "files": {name: _sha256(os.path.join(out, name)) for name in sorted(files)},
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(files)} files + manifest to {out}")
    return 0


def load_dataset(dataset_dir, config: RunConfig | None = None):
    """(geometries, snapshots K x P, params, config, grid) from a dataset dir."""
    cfg_path = os.path.join(dataset_dir, "config.cfg")
    if config is None:
        config = load_config(cfg_path)
    with open(os.path.join(dataset_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    box = tuple(manifest["box"])
    grid = reference_grid(box, config.grid_nx, config.grid_ny)
    params = []
    with open(os.path.join(dataset_dir, "doe.csv"), encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            theta, lam = line.strip().split(",")
            params.append([float(theta), float(lam)])
    params = np.asarray(params)
    geometries, snapshots = [], []
    for k in range(manifest["k_geometries"]):
        poly = read_polygon_csv(os.path.join(dataset_dir, f"geometry_{k:02d}.csv"))
        geometries.append(domain_from_polygon(poly, grid,
                                              steepness=config.steepness))
        group = [read_raster(os.path.join(dataset_dir, f"snap_{k:02d}_{p:02d}.otr"))
                 for p in range(manifest["snapshots_per_geometry"])]
        snapshots.append(group)
    return geometries, snapshots, params, config, grid


def print_timing_table(timings: dict, k: int, p_total: int) -> None:
    rows = [
        ("SSM offline stage", None),
        ("  Particle decomposition", timings["ssm_decomposition"]),
        (f"  P-dimensional matching (P={p_total})", timings["ssm_matching"]),
        ("  SSM training", timings["ssm_training"]),
        ("SGM offline stage", None),
        ("  Particle decomposition", timings["sgm_decomposition"]),
        (f"  K-dimensional matching (K={k})", timings["sgm_matching"]),
        ("Offline total", sum(timings.values())),
    ]
    for label, seconds in rows:
        if seconds is None:
            print(label)
        else:
            print(f"{label:<42s} {seconds:10.1f} s")


def cmd_train(args) -> int:
    config = _load_run_config(args) if args.config else None
    geometries, snapshots, params, config, _ = load_dataset(args.dataset, config)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    settings = config.train_settings()
    model = train(geometries, snapshots, params, settings)
    model.config.update(theta_min=config.theta_min, theta_max=config.theta_max,
                        lambda_min=config.lambda_min,
                        lambda_max=config.lambda_max)
    timings = model.provenance["timings"]
    print_timing_table(timings, len(geometries), sum(len(g) for g in snapshots))
    save_model(args.out, model)
    print(f"model written to {args.out}")
    return 0


def _parse_weights(raw: str, k: int) -> BarycentricWeights:
    weights = [float(v) for v in raw.split(",")]
    if len(weights) != k:
        raise BadWeights(f"expected {k} weights, got {len(weights)}")
    return BarycentricWeights(weights)


def cmd_infer(args) -> int:
    model = load_model(args.model)
    if args.weights is None:
        weights = [0.0] * model.n_geometries
        weights[args.geometry] = 1.0
        w = BarycentricWeights(weights)
    else:
        w = _parse_weights(args.weights, model.n_geometries)
    theta = np.array([args.theta, args.lam])
    t0 = time.perf_counter()
    field, levelset = infer_cross_geometry(model, theta, w)
    wall = time.perf_counter() - t0
    write_raster(args.out, field)
    if args.levelset_out:
        write_raster(args.levelset_out, levelset)
    print(f"inference wall time {wall * 1e3:.2f} ms -> {args.out}")
    return 0


def cmd_solve(args) -> int:
    config = _load_run_config(args)
    if args.model:
        model = load_model(args.model)
        grid = model.grid
        poly = model.polygons[args.geometry]
    elif args.polygon:
        poly = read_polygon_csv(args.polygon)
        box = reference_box_for([poly], margin=config.box_margin)
        grid = reference_grid(box, config.grid_nx, config.grid_ny)
    else:
        poly = random_star_domain(seed=config.seed + args.geometry,
                                  config=config.star_config())
        box = reference_box_for([poly], margin=config.box_margin)
        grid = reference_grid(box, config.grid_nx, config.grid_ny)
    dom = domain_from_polygon(poly, grid, steepness=config.steepness)
    problem = HeatProblem(domain=dom, theta=args.theta, lam=args.lam,
                          kappa=config.kappa, tf=config.t_final,
                          n_steps=config.n_steps,
                          bc_distance_power=config.bc_distance_power, grid=grid)
    t0 = time.perf_counter()
    snap = solve(problem)
    wall = time.perf_counter() - t0
    write_raster(args.out, snap)
    print(f"solve wall time {wall:.3f} s -> {args.out}")
    return 0


def cmd_bench_matching(args) -> int:
    config = _load_run_config(args)
    n_particles = args.n_particles
    rng = np.random.default_rng(config.seed)
    rows = []
    for total in range(20, 121, 20):
        clouds = []
        for _ in range(total):
            # mixture-like synthetic clouds: a few blobs with jitter
            blobs = rng.random((5, 2))
            assign = rng.integers(0, 5, size=n_particles)
            centers = blobs[assign] + 0.05 * rng.standard_normal((n_particles, 2))
            clouds.append(ParticleCloud(centers=centers, sigma=0.03))
        t0 = time.perf_counter()
        ensemble = match_multi(clouds, config=config.match_config(),
                               seed=config.seed)
        seconds = time.perf_counter() - t0
        rows.append((total, seconds, ensemble.total_cost))
        log.info("bench %d clouds: %.2f s", total, seconds)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("total_snapshots,wall_seconds,final_cost\n")
        for total, seconds, cost in rows:
            fh.write(f"{total},{seconds!r},{cost!r}\n")
    print(f"benchmark CSV -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .server import serve
    config = _load_run_config(args)
    model = load_model(args.model)
    port = args.port if args.port is not None else config.port
    serve(model, host=args.host, port=port, workers=config.workers)
    return 0


def cmd_default_config(args) -> int:
    print(dump_config(RunConfig().validate()), end="")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otsm",
        description="Particle-based surrogate modeling of fields and geometries")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="INI config file (defaults built in)")
        if seed:
            p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("generate", help="generate geometries + heat snapshots")
    common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="run the offline pipeline on a dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="model file (.otsm)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="one online inference to a raster file")
    p.add_argument("--model", required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--weights", help="comma-separated barycentric weights")
    p.add_argument("--geometry", type=int, default=0,
                   help="geometry index when --weights is omitted (one-hot)")
    p.add_argument("--out", required=True)
    p.add_argument("--levelset-out")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("solve", help="reference heat solve to a raster file")
    common(p)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--model", help="take grid + geometry from a model file")
    p.add_argument("--polygon", help="polygon CSV for the domain")
    p.add_argument("--geometry", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench-matching", help="matching cost/time sweep CSV")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-particles", type=int, default=200,
                   help="cloud size for the benchmark (scaled-down allowed)")
    p.set_defaults(func=cmd_bench_matching)

    p = sub.add_parser("serve", help="HTTP inference service")
    common(p, seed=False)
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("default-config", help="print the built-in config")
    p.set_defaults(func=cmd_default_config)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("OTS_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BadWeights, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OtsmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
