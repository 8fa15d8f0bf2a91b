"""Shared fixtures: small grids, domains, and solved snapshots."""

import numpy as np
import pytest

from otsm import geometry, heat
from otsm.grids import FieldSample, reference_grid


@pytest.fixture(scope="session")
def unit_grid():
    """33x33 grid over [-1, 1]^2, everything masked in."""
    return reference_grid((-1.0, 1.0, -1.0, 1.0), 33, 33)


@pytest.fixture(scope="session")
def star_setup():
    """One star domain on its tight 64x64 reference grid."""
    cfg = geometry.StarDomainConfig(base_radius=0.35)
    poly = geometry.random_star_domain(seed=1, config=cfg)
    box = geometry.reference_box_for([poly], margin=0.2)
    grid = reference_grid(box, 64, 64)
    dom = geometry.domain_from_polygon(poly, grid)
    return poly, grid, dom


@pytest.fixture(scope="session")
def heat_snapshot(star_setup):
    """One solved snapshot at (theta, lambda) = (0.25*pi, 0.3)."""
    _, grid, dom = star_setup
    problem = heat.HeatProblem(domain=dom, theta=0.25 * np.pi, lam=0.3, grid=grid)
    return heat.solve(problem)


def gaussian_bump_field(grid, center, width=0.25):
    """Smooth positive test field with a single bump, masked everywhere."""
    xx, yy = np.meshgrid(grid.xs, grid.ys)
    values = np.exp(-((xx - center[0]) ** 2 + (yy - center[1]) ** 2) / (2 * width ** 2))
    return FieldSample(grid=grid, values=values)
