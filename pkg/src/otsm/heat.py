"""Parametric transient heat problem on masked Cartesian grids, plus the
latin-hypercube design of experiments used to sample it.

The PDE is kappa * dT/dt = laplace(T) with a time-constant Dirichlet boundary
temperature peaking at a boundary point (x_c, y_c) selected by the polar
angle theta from the domain centroid.  Space is discretized with a 5-point
Laplacian whose boundary-adjacent stencils use fractional (ghost Dirichlet)
arm lengths from the signed distance function, and time with implicit
backward Euler (one sparse factorization, reused every step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import EmptyInterior, SingularSystem
from .geometry import GeometryDomain, ray_boundary_point, sdf_from_polygon
from .grids import FieldSample, Grid

MIN_ARM_FRACTION = 1e-3


@dataclass
class HeatProblem:
    domain: GeometryDomain
    theta: float
    lam: float
    kappa: float = 0.015
    t0: float = 0.0
    tf: float = 1.0
    n_steps: int = 50
    grid: Grid | None = None
    bc_distance_power: int = 2      # 2 matches the squared-distance boundary law

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.tf <= self.t0:
            raise ValueError("tf must exceed t0")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.bc_distance_power not in (1, 2):
            raise ValueError("bc_distance_power must be 1 or 2")
        if self.grid is None:
            self.grid = self.domain.levelset.grid

    def heat_source_point(self) -> np.ndarray:
        """Boundary point (x_c, y_c) where the prescribed temperature peaks."""
        return ray_boundary_point(self.domain.boundary, self.domain.centroid,
                                  self.theta)


def boundary_temperature(problem: HeatProblem, x) -> float:
    """Dirichlet value max(0, L - |x_c - x|^2) / L, in [0, 1]."""
    xc = problem.heat_source_point()
    x = np.asarray(x, dtype=float)
    d = float(np.linalg.norm(xc - x))
    if problem.bc_distance_power == 2:
        d = d * d
    return max(0.0, problem.lam - d) / problem.lam


def _bc_values(problem: HeatProblem, points: np.ndarray) -> np.ndarray:
    xc = problem.heat_source_point()
    d = np.linalg.norm(points - xc[None, :], axis=1)
    if problem.bc_distance_power == 2:
        d = d * d
    return np.maximum(0.0, problem.lam - d) / problem.lam


@dataclass
class _Discretization:
    matrix: sp.csr_matrix       # kappa/dt * I - L  (unknowns only)
    bc_load: np.ndarray         # boundary contribution to the RHS
    inside: np.ndarray          # (ny, nx) bool
    index: np.ndarray           # (ny, nx) unknown index or -1


def _discretize(problem: HeatProblem, bc_override=None) -> _Discretization:
    grid = problem.grid
    sdf = sdf_from_polygon(problem.domain.boundary, grid).values
    inside = sdf > 0.0
    if not inside.any():
        raise EmptyInterior("no grid nodes inside the domain")
    ny, nx = inside.shape
    index = np.full((ny, nx), -1, dtype=np.int64)
    index[inside] = np.arange(inside.sum())
    n_unknown = int(inside.sum())

    dt = (problem.tf - problem.t0) / problem.n_steps
    diag = np.full(n_unknown, problem.kappa / dt)
    rows, cols, data = [], [], []
    bc_load = np.zeros(n_unknown)

    jy, jx = np.nonzero(inside)
    node_x = grid.origin[0] + grid.spacing[0] * jx
    node_y = grid.origin[1] + grid.spacing[1] * jy
    s_in = sdf[jy, jx]

    # fractional arm lengths toward each of the four neighbors
    def arm(dj, di, h):
        njy, njx = jy + dj, jx + di
        in_range = (njy >= 0) & (njy < ny) & (njx >= 0) & (njx < nx)
        neighbor_inside = np.zeros(len(jy), dtype=bool)
        neighbor_idx = np.full(len(jy), -1, dtype=np.int64)
        s_out = np.full(len(jy), -h)    # off-grid treated as boundary at most h away
        ok = in_range
        neighbor_inside[ok] = inside[njy[ok], njx[ok]]
        neighbor_idx[ok & neighbor_inside] = index[njy[ok & neighbor_inside],
                                                   njx[ok & neighbor_inside]]
        s_out[ok] = sdf[njy[ok], njx[ok]]
        frac = np.ones(len(jy))
        cut = ~neighbor_inside
        denom = np.maximum(s_in[cut] - s_out[cut], 1e-30)
        frac[cut] = np.clip(s_in[cut] / denom, MIN_ARM_FRACTION, 1.0)
        return frac * h, neighbor_idx, cut, frac

    hx = float(grid.spacing[0])
    hy = float(grid.spacing[1])
    arms = {
        "xm": arm(0, -1, hx), "xp": arm(0, 1, hx),
        "ym": arm(-1, 0, hy), "yp": arm(1, 0, hy),
    }

    def bc_at(cut_mask, frac, dx, dy):
        pts = np.column_stack([
            node_x[cut_mask] + frac[cut_mask] * dx,
            node_y[cut_mask] + frac[cut_mask] * dy,
        ])
        if bc_override is not None:
            return bc_override(pts)
        return _bc_values(problem, pts)

    for (minus, plus, dxm, dym, dxp, dyp) in [
        ("xm", "xp", -hx, 0.0, hx, 0.0),
        ("ym", "yp", 0.0, -hy, 0.0, hy),
    ]:
        h1, idx1, cut1, frac1 = arms[minus]
        h2, idx2, cut2, frac2 = arms[plus]
        csum = h1 + h2
        c_minus = 2.0 / (h1 * csum)
        c_plus = 2.0 / (h2 * csum)
        diag += 2.0 / (h1 * h2)
        # interior couplings
        m = ~cut1
        rows.append(index[jy[m], jx[m]])
        cols.append(idx1[m])
        data.append(-c_minus[m])
        m = ~cut2
        rows.append(index[jy[m], jx[m]])
        cols.append(idx2[m])
        data.append(-c_plus[m])
        # boundary contributions
        if cut1.any():
            vals = bc_at(cut1, frac1, dxm, dym)
            np.add.at(bc_load, index[jy[cut1], jx[cut1]], c_minus[cut1] * vals)
        if cut2.any():
            vals = bc_at(cut2, frac2, dxp, dyp)
            np.add.at(bc_load, index[jy[cut2], jx[cut2]], c_plus[cut2] * vals)

    rows.append(np.arange(n_unknown))
    cols.append(np.arange(n_unknown))
    data.append(diag)
    matrix = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown))
    return _Discretization(matrix=matrix, bc_load=bc_load, inside=inside, index=index)


def solve(problem: HeatProblem, bc_override=None) -> FieldSample:
    """Temperature field at t_f; mask of the result marks inside nodes.

    ``bc_override`` (test hook) replaces the boundary law with a callable
    mapping boundary points (n, 2) to temperatures.
    """
    disc = _discretize(problem, bc_override=bc_override)
    dt = (problem.tf - problem.t0) / problem.n_steps
    try:
        lu = splu(disc.matrix.tocsc())
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    t = np.zeros(disc.matrix.shape[0])
    coef = problem.kappa / dt
    for _ in range(problem.n_steps):
        t = lu.solve(coef * t + disc.bc_load)
    values = np.zeros(disc.inside.shape)
    values[disc.inside] = t
    grid = problem.grid.with_mask(disc.inside)
    return FieldSample(grid=grid, values=values)


# ---------------------------------------------------------------------------
# design of experiments

@dataclass
class DoEPlan:
    samples: np.ndarray                 # (P, 2) of (theta, lambda)
    bounds: np.ndarray                  # (2, 2) rows (lo, hi)
    meta: dict = field(default_factory=dict)


DEFAULT_BOUNDS = np.array([[0.05 * np.pi, 0.45 * np.pi],
                           [0.05, 0.6]])


def lhs_sample(bounds: np.ndarray, n_samples: int, seed: int = 0) -> DoEPlan:
    """Stratified latin hypercube: one jittered sample per axis stratum."""
    bounds = np.asarray(bounds, dtype=float)
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    q = bounds.shape[0]
    unit = np.empty((n_samples, q))
    for d in range(q):
        strata = (rng.permutation(n_samples) + rng.random(n_samples)) / n_samples
        unit[:, d] = strata
    samples = bounds[:, 0] + unit * (bounds[:, 1] - bounds[:, 0])
    return DoEPlan(samples=samples, bounds=bounds, meta={"seed": seed})
