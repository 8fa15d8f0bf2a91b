"""Offline training and online inference of the particle surrogate.

Training turns K geometries x P solved snapshots into one model container:
every snapshot is normalized and decomposed into an equal-mass Gaussian
cloud, all K*P clouds are matched into one consistent row ordering, and each
geometry gets a POD basis plus separable polynomial regressors for the
reduced particle coordinates and the field integral (the SSM).  The K
geometry level-sets are decomposed and matched the same way (the SGM), which
makes shape interpolation a row-wise barycenter of matched centers.

Inference predicts per-geometry particle positions and integrals, blends
them with barycentric weights, and evaluates the resulting cloud -- no PDE
solve appears anywhere online.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BadWeights, InsufficientSnapshots, SizeMismatch, ZeroReference
from .geometry import (BarycentricWeights, GeometryDomain, barycenter,
                       domain_mask, levelset_from_cloud, reparameterize)
from .grids import FieldSample, Grid
from .matching import MatchConfig, MatchedEnsemble, match_multi
from .regression import (PodBasis, PolyRegressor, SnapshotMatrix,
                         integral_regressor_fit, integral_regressor_predict,
                         pod_fit, poly_fit, poly_predict)
from .splat import ParticleCloud, decompose, evaluate_cloud, normalize_field


@dataclass
class TrainSettings:
    """Hyperparameters of the offline pipeline (defaults follow the studied
    heat problem: N_s=600 particles at sigma_s=0.03, degree-3 regression)."""

    n_s: int = 600
    sigma_s: float = 0.03
    n_g: int = 600
    sigma_g: float = 0.02
    degree: int = 3
    energy_threshold: float = 0.9999
    regression_tol: float = 1e-2
    max_terms: int = 10
    seed: int = 0
    # solution decomposition: entropic-transport initialization with no
    # least-squares polish keeps the reconstruction error concentrated at the
    # hot boundary arc instead of spread over the bulk (see decompose docs)
    solution_init: str = "transport"
    solution_polish_iters: int = 0
    geometry_polish_iters: int = 5000
    decompose_tol: float = 1e-4
    match: MatchConfig = field(default_factory=MatchConfig)


@dataclass
class SSM:
    """Per-geometry surrogate solution model."""

    geometry_id: int
    pod: PodBasis
    regressor: PolyRegressor
    integral_model: PolyRegressor
    sigma_s: float
    n_s: int
    params: np.ndarray          # (P, Q) training parameter vectors
    coeff_residual: float = 0.0


@dataclass
class SGM:
    """Surrogate geometric model: matched geometry clouds over one box."""

    ensemble: MatchedEnsemble
    box: tuple
    geometry_ids: list
    interpolating: bool


@dataclass
class ModelContainer:
    """Everything needed for online inference, serialization-friendly."""

    sgm: SGM
    ssms: list
    orderings: np.ndarray       # (K*P - 1, N_s) global solution-match orderings
    grid: Grid
    polygons: list              # K training boundary polygons
    masks: np.ndarray           # (K, ny, nx) true inside-domain masks
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def n_geometries(self) -> int:
        return len(self.ssms)


def train(geometries: list, snapshots: list, params,
          settings: TrainSettings | None = None) -> ModelContainer:
    """Run the full offline pipeline; deterministic given the master seed.

    ``snapshots`` holds K lists of P raw FieldSamples (positive fields on the
    shared reference grid); ``params`` is one (P, Q) array shared by all
    geometries or a list of K such arrays.  Stage wall times land in
    ``provenance["timings"]``.
    """
    settings = settings or TrainSettings()
    k_geoms = len(geometries)
    if k_geoms < 1:
        raise InsufficientSnapshots("need at least one geometry")
    if len(snapshots) != k_geoms:
        raise SizeMismatch("snapshot groups must match geometry count")
    for group in snapshots:
        if len(group) < 2:
            raise InsufficientSnapshots("need at least two snapshots per geometry")
    if isinstance(params, np.ndarray) or (params and np.ndim(params[0]) == 1):
        params = [np.atleast_2d(np.asarray(params, dtype=float))] * k_geoms
    else:
        params = [np.atleast_2d(np.asarray(p, dtype=float)) for p in params]

    grid = snapshots[0][0].grid
    timings = {}

    # --- solution decomposition -------------------------------------------
    t0 = time.perf_counter()
    clouds = []
    integrals = []
    for k, group in enumerate(snapshots):
        row_clouds = []
        row_integrals = []
        for p, snap in enumerate(group):
            rho = normalize_field(snap)
            cloud = decompose(rho, settings.n_s, settings.sigma_s,
                              init=settings.solution_init,
                              seed=settings.seed + 1000 * k + p,
                              tol=settings.decompose_tol,
                              max_iter=settings.solution_polish_iters,
                              reseed_attempts=0 if settings.solution_polish_iters == 0
                              else 8)
            row_clouds.append(cloud)
            row_integrals.append(rho.integral_I)
        clouds.append(row_clouds)
        integrals.append(np.asarray(row_integrals))
    timings["ssm_decomposition"] = time.perf_counter() - t0

    # --- global (K*P)-dimensional matching --------------------------------
    t0 = time.perf_counter()
    flat = [c for row in clouds for c in row]
    ensemble = match_multi(flat, config=settings.match, seed=settings.seed)
    orderings = np.stack(ensemble.orderings) if ensemble.orderings else \
        np.empty((0, settings.n_s), dtype=np.int64)
    matched = ensemble.clouds
    timings["ssm_matching"] = time.perf_counter() - t0

    # --- per-geometry SSM fits --------------------------------------------
    t0 = time.perf_counter()
    ssms = []
    for k in range(k_geoms):
        p_count = len(snapshots[k])
        offset = sum(len(snapshots[j]) for j in range(k))
        data = np.column_stack([
            matched[offset + p].centers.ravel() for p in range(p_count)
        ])
        snap_matrix = SnapshotMatrix(data=data, params=params[k])
        pod, coeffs = pod_fit(snap_matrix, settings.energy_threshold)
        regressor = poly_fit(params[k], coeffs, max_degree=settings.degree,
                             tol=settings.regression_tol,
                             max_terms=settings.max_terms, seed=settings.seed + k)
        integral_model = integral_regressor_fit(
            params[k], integrals[k], max_degree=settings.degree,
            tol=settings.regression_tol, max_terms=settings.max_terms,
            seed=settings.seed + 100 + k)
        predicted = np.column_stack([
            poly_predict(regressor, params[k][p]) for p in range(p_count)
        ])
        residual = float(np.linalg.norm(predicted - coeffs) /
                         max(np.linalg.norm(coeffs), 1e-30))
        ssms.append(SSM(geometry_id=k, pod=pod, regressor=regressor,
                        integral_model=integral_model, sigma_s=settings.sigma_s,
                        n_s=settings.n_s, params=params[k],
                        coeff_residual=residual))
    timings["ssm_training"] = time.perf_counter() - t0

    # --- SGM: geometry decomposition and K-dimensional matching -----------
    t0 = time.perf_counter()
    geom_clouds = [
        reparameterize(dom, settings.n_g, settings.sigma_g,
                       seed=settings.seed + 500 + k,
                       tol=settings.decompose_tol,
                       max_iter=settings.geometry_polish_iters)
        for k, dom in enumerate(geometries)
    ]
    timings["sgm_decomposition"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if k_geoms >= 2:
        geom_ensemble = match_multi(geom_clouds, config=settings.match,
                                    seed=settings.seed + 7)
    else:
        geom_ensemble = MatchedEnsemble(clouds=geom_clouds, total_cost=0.0,
                                        orderings=[])
    timings["sgm_matching"] = time.perf_counter() - t0

    box = grid.extent
    sgm = SGM(ensemble=geom_ensemble, box=box,
              geometry_ids=list(range(k_geoms)), interpolating=k_geoms >= 2)
    masks = np.stack([domain_mask(dom) for dom in geometries])
    container = ModelContainer(
        sgm=sgm, ssms=ssms, orderings=orderings, grid=grid,
        polygons=[dom.boundary.copy() for dom in geometries], masks=masks,
        config={
            "n_s": settings.n_s, "sigma_s": settings.sigma_s,
            "n_g": settings.n_g, "sigma_g": settings.sigma_g,
            "degree": settings.degree,
            "energy_threshold": settings.energy_threshold,
            "solution_init": settings.solution_init,
            "solution_polish_iters": settings.solution_polish_iters,
        },
        provenance={"seed": settings.seed, "timings": timings,
                    "match_cost": ensemble.total_cost},
    )
    return container


def _predict_cloud(model: ModelContainer, k: int, theta: np.ndarray):
    """Predicted (ParticleCloud, integral) for geometry k at theta."""
    ssm = model.ssms[k]
    coeffs = poly_predict(ssm.regressor, theta)
    centers = ssm.pod.reconstruct(coeffs).reshape(ssm.n_s, 2)
    integral = integral_regressor_predict(ssm.integral_model, theta)
    if integral < 0:
        warnings.warn(f"predicted integral {integral:g} clamped to 0", stacklevel=3)
        integral = 0.0
    return ParticleCloud(centers=centers, sigma=ssm.sigma_s), integral


def infer_fixed_geometry(model: ModelContainer, k: int,
                         theta: np.ndarray) -> FieldSample:
    """Field prediction on training geometry k, masked to its true domain.

    The returned values are I* times the cloud density over the whole grid
    (strictly positive everywhere); the mask restricts them to the domain.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cloud, integral = _predict_cloud(model, k, theta)
    recon = evaluate_cloud(cloud, model.grid)
    out = FieldSample(grid=model.grid.with_mask(model.masks[k]),
                      values=integral * recon.values, integral_I=integral)
    out.meta.update(geometry=k, theta=theta.tolist())
    return out


def infer_cross_geometry(model: ModelContainer, theta: np.ndarray,
                         w: BarycentricWeights) -> tuple[FieldSample, FieldSample]:
    """Blended-geometry inference: (field, reconstructed level-set).

    Particle positions and integrals combine linearly over geometries with
    the barycentric weights; the level-set of the blended geometry cloud
    defines the output mask.  Exactly one-hot weights delegate to the
    fixed-geometry path so both inference routes coincide identically.
    """
    if len(w.weights) != model.n_geometries:
        raise BadWeights("weight count must equal geometry count")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    grid = model.grid
    levelset = levelset_from_cloud(barycenter(model.sgm.ensemble, w), grid)
    hot = np.nonzero(w.weights == 1.0)[0]
    if len(hot) == 1:
        return infer_fixed_geometry(model, int(hot[0]), theta), levelset

    centers = np.zeros((model.ssms[0].n_s, 2))
    integral = 0.0
    for k, wk in enumerate(w.weights):
        if wk == 0.0:
            continue
        cloud_k, integral_k = _predict_cloud(model, k, theta)
        centers += wk * cloud_k.centers
        integral += wk * integral_k
    cloud = ParticleCloud(centers=centers, sigma=model.ssms[0].sigma_s)
    recon = evaluate_cloud(cloud, grid)
    mask = levelset.values >= 0.5
    out = FieldSample(grid=grid.with_mask(mask),
                      values=integral * recon.values, integral_I=integral)
    out.meta.update(weights=np.asarray(w.weights).tolist(), theta=theta.tolist())
    return out, levelset


def relative_error(predicted: FieldSample, reference: FieldSample) -> FieldSample:
    """Node-wise (predicted - reference) / RMS of the reference over its mask.

    The normalization is sqrt(integral of psi^2 / A over the domain) with A
    the masked area, evaluated by the masked midpoint rule.
    """
    if not predicted.grid.same_lattice(reference.grid):
        raise SizeMismatch("relative error needs a shared grid lattice")
    if not np.array_equal(predicted.grid.mask, reference.grid.mask):
        raise SizeMismatch("relative error needs identical masks")
    mask = reference.grid.mask
    area = mask.sum() * reference.grid.cell_area
    denom = np.sqrt(float((reference.values[mask] ** 2).sum())
                    * reference.grid.cell_area / area)
    if denom < 1e-14:
        raise ZeroReference(f"reference RMS {denom:g} too small")
    values = np.where(mask, (predicted.values - reference.values) / denom, 0.0)
    return FieldSample(grid=reference.grid, values=values)


def idw_baseline(snapshots: list, params: np.ndarray, theta: np.ndarray,
                 rbf_scale: float | None = None) -> FieldSample:
    """Gaussian-RBF inverse-distance interpolation of raw snapshots.

    Default scale is the mean nearest-neighbor distance between training
    parameter vectors; a theta equal to a training vector short-circuits to
    that snapshot exactly.
    """
    if not snapshots:
        raise InsufficientSnapshots("IDW needs at least one snapshot")
    params = np.atleast_2d(np.asarray(params, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    d2 = ((params - theta[None, :]) ** 2).sum(axis=1)
    exact = np.nonzero(d2 == 0.0)[0]
    if len(exact):
        hit = snapshots[int(exact[0])]
        return hit.copy_with(values=hit.values.copy(), integral_I=hit.integral_I)
    if rbf_scale is None:
        if len(params) > 1:
            pd = np.sqrt(((params[:, None, :] - params[None, :, :]) ** 2).sum(axis=2))
            np.fill_diagonal(pd, np.inf)
            rbf_scale = float(pd.min(axis=1).mean())
        else:
            rbf_scale = 1.0
    w = np.exp(-d2 / (2.0 * rbf_scale ** 2))
    total = w.sum()
    if total <= 0:                      # far outside: fall back to nearest
        w = np.where(d2 == d2.min(), 1.0, 0.0)
        total = w.sum()
    values = sum(wp * s.values for wp, s in zip(w, snapshots)) / total
    return FieldSample(grid=snapshots[0].grid, values=values)
