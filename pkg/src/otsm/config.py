"""Run configuration: one INI-style file holding every hyperparameter.

Defaults reproduce the studied heat-problem setting (600 particles at
bandwidth 0.03, degree-3 regression, 4 geometries x 30 snapshots).  Loading
is strict: unknown sections or keys raise, so typos cannot silently fall
back to defaults.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, fields as dc_fields

from .errors import OtsmError
from .geometry import StarDomainConfig
from .matching import MatchConfig
from .surrogate import TrainSettings


class ConfigError(OtsmError):
    """Configuration file is malformed or has unknown/invalid entries."""


@dataclass
class RunConfig:
    # dataset generation
    k_geometries: int = 4
    snapshots_per_geometry: int = 30
    base_radius: float = 0.35
    max_amplitude: float = 0.35
    harmonics: int = 4
    grid_nx: int = 128
    grid_ny: int = 128
    box_margin: float = 0.2
    theta_min: float = 0.05 * math.pi
    theta_max: float = 0.45 * math.pi
    lambda_min: float = 0.05
    lambda_max: float = 0.6
    seed: int = 0
    # heat problem
    kappa: float = 0.015
    t_final: float = 1.0
    n_steps: int = 50
    bc_distance_power: int = 2
    # solution splatting
    n_s: int = 600
    sigma_s: float = 0.03
    solution_init: str = "transport"
    solution_polish_iters: int = 0
    decompose_tol: float = 1e-4
    # geometry splatting
    n_g: int = 600
    sigma_g: float = 0.02
    # sharp sigmoid: transition width ~4/steepness = 0.04, a few grid cells,
    # so the level-set is near-indicator and its 0.5-contour tracks the
    # polygon (a unit steepness level-set never dips below 0.5 inside the
    # reference box at these domain scales)
    steepness: float = 100.0
    geometry_polish_iters: int = 5000
    # regression
    degree: int = 3
    energy_threshold: float = 0.9999
    regression_tol: float = 1e-2
    max_terms: int = 10
    # matching (genetic algorithm)
    population: int = 64
    tournament: int = 3
    elitism: int = 2
    generations: int = 200
    match_abs_tol: float = 1e2
    match_rel_tol: float = 1e-4
    expected_swaps: float = 2.0
    # inference / service
    idw_rbf_scale: float = 0.0          # 0 means the nearest-neighbor heuristic
    port: int = 8787
    workers: int = 4

    def validate(self) -> "RunConfig":
        checks = [
            (self.k_geometries >= 1, "k_geometries must be >= 1"),
            (self.snapshots_per_geometry >= 1, "snapshots_per_geometry must be >= 1"),
            (self.base_radius > 0, "base_radius must be positive"),
            (self.grid_nx >= 2 and self.grid_ny >= 2, "grid must be at least 2x2"),
            (self.sigma_s > 0 and self.sigma_g > 0, "bandwidths must be positive"),
            (self.n_s >= 1 and self.n_g >= 1, "particle counts must be >= 1"),
            (self.theta_max > self.theta_min, "theta bounds must be increasing"),
            (self.lambda_max > self.lambda_min, "lambda bounds must be increasing"),
            (self.lambda_min > 0, "lambda_min must be positive"),
            (self.kappa > 0, "kappa must be positive"),
            (self.n_steps >= 1, "n_steps must be >= 1"),
            (self.bc_distance_power in (1, 2), "bc_distance_power must be 1 or 2"),
            (self.solution_init in ("transport", "sample"),
             "solution_init must be 'transport' or 'sample'"),
            (0 < self.energy_threshold <= 1, "energy_threshold must be in (0, 1]"),
            (self.degree >= 1, "degree must be >= 1"),
            (self.workers >= 1, "workers must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    # ---- derived objects --------------------------------------------------

    def bounds(self):
        import numpy as np
        return np.array([[self.theta_min, self.theta_max],
                         [self.lambda_min, self.lambda_max]])

    def star_config(self) -> StarDomainConfig:
        return StarDomainConfig(base_radius=self.base_radius,
                                max_amplitude=self.max_amplitude,
                                harmonics=self.harmonics)

    def match_config(self) -> MatchConfig:
        return MatchConfig(population=self.population, tournament=self.tournament,
                           elitism=self.elitism, generations=self.generations,
                           abs_tol=self.match_abs_tol, rel_tol=self.match_rel_tol,
                           expected_swaps=self.expected_swaps)

    def train_settings(self) -> TrainSettings:
        return TrainSettings(
            n_s=self.n_s, sigma_s=self.sigma_s, n_g=self.n_g,
            sigma_g=self.sigma_g, degree=self.degree,
            energy_threshold=self.energy_threshold,
            regression_tol=self.regression_tol, max_terms=self.max_terms,
            seed=self.seed, solution_init=self.solution_init,
            solution_polish_iters=self.solution_polish_iters,
            geometry_polish_iters=self.geometry_polish_iters,
            decompose_tol=self.decompose_tol, match=self.match_config())


_SECTIONS = {
    "dataset": ["k_geometries", "snapshots_per_geometry", "base_radius",
                "max_amplitude", "harmonics", "grid_nx", "grid_ny",
                "box_margin", "theta_min", "theta_max", "lambda_min",
                "lambda_max", "seed"],
    "heat": ["kappa", "t_final", "n_steps", "bc_distance_power"],
    "splat": ["n_s", "sigma_s", "solution_init", "solution_polish_iters",
              "decompose_tol"],
    "geometry": ["n_g", "sigma_g", "steepness", "geometry_polish_iters"],
    "regression": ["degree", "energy_threshold", "regression_tol", "max_terms"],
    "matching": ["population", "tournament", "elitism", "generations",
                 "match_abs_tol", "match_rel_tol", "expected_swaps"],
    "service": ["idw_rbf_scale", "port", "workers"],
}

_TYPES = {f.name: f.type for f in dc_fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"key '{key}': cannot parse {raw!r}") from exc


def load_config(path) -> RunConfig:
    """Parse and validate a config file; unknown sections/keys are errors."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            values[key] = _convert(key, raw)
    return RunConfig(**values).validate()


def dump_config(config: RunConfig) -> str:
    """Render a config as the canonical INI text (all keys, all sections)."""
    out = io.StringIO()
    for section, keys in _SECTIONS.items():
        out.write(f"[{section}]\n")
        for key in keys:
            out.write(f"{key} = {getattr(config, key)}\n")
        out.write("\n")
    return out.getvalue()


def save_config(path, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(config))
