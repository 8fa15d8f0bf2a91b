"""Domains as SDF-derived sigmoid level-sets, their particle clouds, and
Wasserstein-barycentric blending of matched geometry clouds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from .errors import (BadWeights, DegeneratePolygon, OutOfBox, RayMiss,
                     SelfIntersectingPolygon, SizeMismatch)
from .grids import FieldSample, Grid
from .matching import MatchedEnsemble
from .splat import ParticleCloud, decompose, evaluate_cloud, normalize_field


# ---------------------------------------------------------------------------
# polygon utilities

def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise orientation)."""
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float((x * yn - xn * y).sum())


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


def polygon_is_simple(poly: np.ndarray) -> bool:
    """Check all non-adjacent edge pairs for proper intersections (vectorized
    over the full pair grid; adjacent edges sharing a vertex are excluded)."""
    n = len(poly)
    a = poly
    b = np.roll(poly, -1, axis=0)
    e = b - a

    def cross(u, v):
        return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]

    aj_ai = a[None, :, :] - a[:, None, :]
    bj_ai = b[None, :, :] - a[:, None, :]
    d1 = cross(e[:, None, :], aj_ai)
    d2 = cross(e[:, None, :], bj_ai)
    d3 = cross(e[None, :, :], -aj_ai)
    d4 = cross(e[None, :, :], a[:, None, :] + e[:, None, :] - a[None, :, :])
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)
    idx = np.arange(n)
    adjacent = (np.abs(idx[:, None] - idx[None, :]) <= 1) \
        | (np.abs(idx[:, None] - idx[None, :]) == n - 1)
    return not (proper & ~adjacent).any()


def validate_polygon(poly: np.ndarray, check_simple: bool = True) -> np.ndarray:
    """Return the polygon in counter-clockwise order, raising on degeneracy."""
    poly = np.asarray(poly, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise DegeneratePolygon("polygon needs at least 3 (x, y) vertices")
    area = polygon_area(poly)
    if abs(area) < 1e-12:
        raise DegeneratePolygon("polygon area is near zero")
    if area < 0:
        poly = poly[::-1].copy()
    if check_simple and not polygon_is_simple(poly):
        raise SelfIntersectingPolygon("polygon boundary crosses itself")
    return poly


def _point_segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Min distance from each point to the closed segments (a[i], b[i]).

    points: (M, 2); a, b: (S, 2).  Returns (M,) distances.
    """
    ab = b - a                                       # (S, 2)
    ab2 = np.maximum((ab * ab).sum(axis=1), 1e-30)
    # chunk over points to bound the (M, S) temporaries
    out = np.empty(len(points))
    chunk = max(1, 2_000_000 // max(len(a), 1))
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk]
        ap = p[:, None, :] - a[None, :, :]           # (m, S, 2)
        t = np.clip((ap * ab[None, :, :]).sum(axis=2) / ab2[None, :], 0.0, 1.0)
        closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
        d2 = ((p[:, None, :] - closest) ** 2).sum(axis=2)
        out[lo:lo + chunk] = np.sqrt(d2.min(axis=1))
    return out


def points_in_polygon(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule point-in-polygon test, vectorized over points."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    for i in range(len(poly)):
        cond = (y1[i] > y) != (y2[i] > y)
        if not cond.any():
            continue
        xint = x1[i] + (y - y1[i]) / (y2[i] - y1[i]) * (x2[i] - x1[i])
        inside ^= cond & (x < xint)
    return inside


def closest_boundary_points(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """For each point, the nearest point on the polygon boundary."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    ab2 = np.maximum((ab * ab).sum(axis=1), 1e-30)
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab[None, :, :]).sum(axis=2) / ab2[None, :], 0.0, 1.0)
    cand = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d2 = ((points[:, None, :] - cand) ** 2).sum(axis=2)
    return cand[np.arange(len(points)), d2.argmin(axis=1)]


def ray_boundary_point(poly: np.ndarray, origin: np.ndarray, angle: float) -> np.ndarray:
    """Farthest intersection of the ray from ``origin`` at ``angle`` with the
    polygon boundary (unique for star-shaped polygons)."""
    d = np.array([np.cos(angle), np.sin(angle)])
    a = poly
    b = np.roll(poly, -1, axis=0)
    e = b - a
    denom = d[0] * (-e[:, 1]) - d[1] * (-e[:, 0])
    best_t = -1.0
    hit = None
    for i in range(len(poly)):
        if abs(denom[i]) < 1e-14:
            continue
        rhs = a[i] - origin
        t = (rhs[0] * (-e[i, 1]) - rhs[1] * (-e[i, 0])) / denom[i]
        s = (d[0] * rhs[1] - d[1] * rhs[0]) / denom[i]
        if t >= 0 and -1e-12 <= s <= 1 + 1e-12 and t > best_t:
            best_t = t
            hit = origin + t * d
    if hit is None:
        raise RayMiss(f"ray at angle {angle:g} misses the boundary")
    return hit


# ---------------------------------------------------------------------------
# domain types

@dataclass
class GeometryDomain:
    """Closed polygon with its rasterized SDF and sigmoid level-set."""

    boundary: np.ndarray        # (V, 2), counter-clockwise
    sdf: FieldSample
    levelset: FieldSample
    area: float
    meta: dict = field(default_factory=dict)

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.boundary)


@dataclass
class BarycentricWeights:
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if len(self.weights) < 1:
            raise BadWeights("need at least one weight")
        if (self.weights < 0).any():
            raise BadWeights("weights must be non-negative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise BadWeights(f"weights must sum to 1, got {float(self.weights.sum())!r}")


# ---------------------------------------------------------------------------
# operations

def sdf_from_polygon(poly: np.ndarray, grid: Grid) -> FieldSample:
    """Signed distance to the polygon boundary at every grid node,
    positive inside, negative outside."""
    poly = validate_polygon(poly)
    nodes = grid.nodes()
    dist = _point_segment_distances(nodes, poly, np.roll(poly, -1, axis=0))
    sign = np.where(points_in_polygon(nodes, poly), 1.0, -1.0)
    values = (sign * dist).reshape(grid.ny, grid.nx)
    return FieldSample(grid=grid, values=values)


def sigmoid_levelset(sdf: FieldSample, steepness: float = 1.0) -> FieldSample:
    """Node-wise logistic transform of the SDF; 0.5 exactly on the boundary."""
    sdf.require_finite()
    with np.errstate(over="ignore"):
        values = 1.0 / (1.0 + np.exp(-steepness * sdf.values))
    return sdf.copy_with(values=values)


def domain_from_polygon(poly: np.ndarray, grid: Grid,
                        steepness: float = 1.0) -> GeometryDomain:
    """Build a GeometryDomain on the reference grid: SDF, level-set, mask."""
    poly = validate_polygon(poly)
    sdf = sdf_from_polygon(poly, grid)
    levelset = sigmoid_levelset(sdf, steepness=steepness)
    return GeometryDomain(boundary=poly, sdf=sdf, levelset=levelset,
                          area=abs(polygon_area(poly)))


def domain_mask(dom: GeometryDomain) -> np.ndarray:
    """Inside-domain mask on the reference grid (level-set >= 0.5)."""
    return dom.levelset.values >= 0.5


def reparameterize(dom: GeometryDomain, n_particles: int, sigma: float,
                   seed: int = 0, tol: float = 1e-4,
                   max_iter: int = 5000) -> ParticleCloud:
    """Decompose the domain's level-set into a particle cloud.

    The level-set has global support, so normalization and fitting use the
    whole reference box (no mask), unlike solution splatting.
    """
    grid = dom.levelset.grid
    full_grid = Grid(origin=grid.origin, spacing=grid.spacing, nx=grid.nx, ny=grid.ny)
    raw = FieldSample(grid=full_grid, values=dom.levelset.values)
    eta = normalize_field(raw)
    cloud = decompose(eta, n_particles=n_particles, sigma=sigma, seed=seed,
                      tol=tol, max_iter=max_iter)
    cloud.meta["levelset_integral_J"] = eta.integral_I
    return cloud


def barycenter(ensemble: MatchedEnsemble, w: BarycentricWeights) -> ParticleCloud:
    """Row-wise weighted linear average of matched geometry clouds."""
    if len(w.weights) != ensemble.n_clouds:
        raise SizeMismatch("weight count must equal ensemble size")
    sigma = ensemble.clouds[0].sigma
    for c in ensemble.clouds[1:]:
        if c.sigma != sigma:
            raise SizeMismatch("matched clouds must share one bandwidth")
    centers = np.zeros_like(ensemble.clouds[0].centers)
    for wk, cloud in zip(w.weights, ensemble.clouds):
        centers += wk * cloud.centers
    return ParticleCloud(centers=centers, sigma=sigma)


def levelset_from_cloud(cloud: ParticleCloud, grid: Grid) -> FieldSample:
    """Reconstructed level-set: the cloud density rescaled by its maximum."""
    recon = evaluate_cloud(cloud, grid)
    return recon.copy_with(values=recon.values / recon.values.max())


def membership(levelset: FieldSample, x) -> bool:
    """Bilinear interpolation of the level-set at x, compared to 0.5."""
    grid = levelset.grid
    x = np.asarray(x, dtype=float)
    fx = (x[0] - grid.origin[0]) / grid.spacing[0]
    fy = (x[1] - grid.origin[1]) / grid.spacing[1]
    if fx < 0 or fy < 0 or fx > grid.nx - 1 or fy > grid.ny - 1:
        raise OutOfBox(f"point {x} outside the reference box")
    i0, j0 = int(min(fx, grid.nx - 2)), int(min(fy, grid.ny - 2))
    tx, ty = fx - i0, fy - j0
    v = levelset.values
    interp = ((1 - tx) * (1 - ty) * v[j0, i0] + tx * (1 - ty) * v[j0, i0 + 1]
              + (1 - tx) * ty * v[j0 + 1, i0] + tx * ty * v[j0 + 1, i0 + 1])
    return bool(interp >= 0.5)


def extract_contour(levelset: FieldSample, level: float = 0.5) -> np.ndarray:
    """Longest iso-contour of the level-set as an (x, y) polygon
    (marching squares on the raster)."""
    grid = levelset.grid
    contours = measure.find_contours(levelset.values, level)
    if not contours:
        raise DegeneratePolygon(f"no contour at level {level:g}")
    contour = max(contours, key=len)
    xy = np.column_stack([
        grid.origin[0] + contour[:, 1] * grid.spacing[0],
        grid.origin[1] + contour[:, 0] * grid.spacing[1],
    ])
    if np.allclose(xy[0], xy[-1]):
        xy = xy[:-1]
    return validate_polygon(xy, check_simple=False)


@dataclass
class StarDomainConfig:
    base_radius: float = 0.8
    max_amplitude: float = 0.35
    harmonics: int = 4
    n_vertices: int = 256
    min_radius_fraction: float = 0.3


def random_star_domain(seed: int, config: StarDomainConfig | None = None,
                       grid: Grid | None = None,
                       steepness: float = 1.0) -> GeometryDomain | np.ndarray:
    """Random star-shaped polygon r(a) = r0 (1 + sum_j a_j cos(j a + phi_j)),
    centered at the origin, clamped so min radius stays above 0.3 r0.

    Returns the polygon if ``grid`` is None, else a full GeometryDomain.
    """
    config = config or StarDomainConfig()
    rng = np.random.default_rng(seed)
    amps = rng.uniform(-1.0, 1.0, size=config.harmonics)
    if config.harmonics:
        amps *= config.max_amplitude / np.maximum(np.arange(1, config.harmonics + 1), 1)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=config.harmonics)
    alpha = np.linspace(0.0, 2.0 * np.pi, config.n_vertices, endpoint=False)
    pert = np.zeros_like(alpha)
    for j in range(config.harmonics):
        pert += amps[j] * np.cos((j + 1) * alpha + phases[j])
    # rescale the perturbation if it would pinch the radius below the floor
    floor = config.min_radius_fraction
    low = pert.min()
    if 1.0 + low <= floor:
        pert *= (1.0 - floor) * 0.999 / (-low)
    r = config.base_radius * (1.0 + pert)
    poly = np.column_stack([r * np.cos(alpha), r * np.sin(alpha)])
    if grid is None:
        return poly
    return domain_from_polygon(poly, grid, steepness=steepness)


def reference_box_for(polys: list[np.ndarray], margin: float = 0.2) -> tuple[float, float, float, float]:
    """Tight bounding box of all polygons, padded by ``margin`` per side."""
    pts = np.vstack(polys)
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    dx, dy = (xmax - xmin) * margin, (ymax - ymin) * margin
    return (float(xmin - dx), float(xmax + dx), float(ymin - dy), float(ymax + dy))
