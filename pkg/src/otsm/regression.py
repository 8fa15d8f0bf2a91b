"""POD compression of matched particle snapshots and a sparse separable
polynomial regressor (greedy rank-one enrichment with alternating least
squares) mapping parameter vectors to reduced coefficients and integrals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SnapshotMatrix:
    """Stacked particle coordinates, one column per training snapshot."""

    data: np.ndarray        # (d*N, P)
    params: np.ndarray      # (P, Q)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.params = np.atleast_2d(np.asarray(self.params, dtype=float))
        if self.data.shape[1] != self.params.shape[0]:
            raise ValueError("column count must equal parameter row count")
        if not np.isfinite(self.data).all() or not np.isfinite(self.params).all():
            raise ValueError("snapshot matrix contains non-finite entries")


@dataclass
class PodBasis:
    modes: np.ndarray               # (d*N, R), orthonormal columns
    singular_values: np.ndarray
    energy_threshold: float

    @property
    def rank(self) -> int:
        return self.modes.shape[1]

    def project(self, data: np.ndarray) -> np.ndarray:
        return self.modes.T @ data

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        return self.modes @ coeffs


def pod_fit(snap: SnapshotMatrix, energy_threshold: float = 0.9999) -> tuple[PodBasis, np.ndarray]:
    """Thin SVD with the standard energy-retention rank criterion.

    Returns the basis and the generalized coefficients (R x P).  A zero tail
    of singular values is fine; the basis then just captures the full range.
    """
    if snap.data.shape[1] < 2:
        raise ValueError("POD needs at least two snapshots")
    if not 0 < energy_threshold <= 1:
        raise ValueError("energy threshold must lie in (0, 1]")
    u, s, _ = np.linalg.svd(snap.data, full_matrices=False)
    energy = s ** 2
    total = energy.sum()
    if total == 0:
        rank = 1
    else:
        frac = np.cumsum(energy) / total
        rank = int(np.searchsorted(frac, energy_threshold - 1e-15) + 1)
        rank = min(rank, len(s))
    basis = PodBasis(modes=u[:, :rank], singular_values=s,
                     energy_threshold=energy_threshold)
    return basis, basis.project(snap.data)


# ---------------------------------------------------------------------------
# separable polynomial regression

@dataclass
class PolyRegressor:
    """Sum of rank-one products of 1D polynomials per output component.

    ``terms[r]`` is a list of (Q, degree+1) coefficient arrays for output r;
    inputs are affinely mapped to [-1, 1] per dimension using the training
    bounds before polynomial evaluation.
    """

    terms: list[list[np.ndarray]]
    max_degree: int
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray
    ill_conditioned: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_outputs(self) -> int:
        return len(self.terms)

    def _normalize(self, params: np.ndarray) -> np.ndarray:
        span = np.where(self.bounds_hi > self.bounds_lo,
                        self.bounds_hi - self.bounds_lo, 1.0)
        return 2.0 * (params - self.bounds_lo) / span - 1.0


def _vanders(z: np.ndarray, degree: int) -> list[np.ndarray]:
    return [np.vander(z[:, q], degree + 1, increasing=True) for q in range(z.shape[1])]


def _term_values(coeffs: np.ndarray, vanders: list[np.ndarray]) -> np.ndarray:
    out = np.ones(vanders[0].shape[0])
    for q, v in enumerate(vanders):
        out *= v @ coeffs[q]
    return out


def _fit_rank_one(residual: np.ndarray, vanders: list[np.ndarray], rng,
                  sweeps: int = 60, ridge: float = 1e-8):
    """One separable term fitted to the residual by alternating least squares.

    Returns (coeffs, ill_flag); the final sweep solves an exact least-squares
    problem in the last dimension, so the new residual can never exceed the
    old one (zero coefficients are always feasible).
    """
    q_dims = len(vanders)
    k = vanders[0].shape[1]
    coeffs = np.vstack([rng.standard_normal(k) * 0.1 + (np.arange(k) == 0)
                        for _ in range(q_dims)])
    ill = False
    prev = None
    for _ in range(sweeps):
        for q in range(q_dims):
            u = np.ones(len(residual))
            for q2 in range(q_dims):
                if q2 != q:
                    u *= vanders[q2] @ coeffs[q2]
            design = vanders[q] * u[:, None]
            gram = design.T @ design
            rhs = design.T @ residual
            if np.linalg.cond(gram) > 1e12:
                ill = True
                gram = gram + ridge * np.eye(k)
            coeffs[q] = np.linalg.solve(gram, rhs)
        vals = _term_values(coeffs, vanders)
        if prev is not None and np.linalg.norm(vals - prev) < 1e-12:
            break
        prev = vals
    return coeffs, ill


def poly_fit(params: np.ndarray, targets: np.ndarray, max_degree: int = 3,
             tol: float = 1e-2, max_terms: int = 10, seed: int = 0) -> PolyRegressor:
    """Greedy rank-one separable enrichment, one output row at a time.

    Enrichment of an output stops once the prediction change between
    successive enrichments drops below ``tol`` (2-norm over the training
    inputs) or the term cap is hit.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    p, q_dims = params.shape
    n_free = (max_degree + 1) * q_dims
    if p <= n_free:
        raise ValueError(f"{p} samples cannot support degree-{max_degree} terms")
    lo, hi = params.min(axis=0), params.max(axis=0)
    model = PolyRegressor(terms=[], max_degree=max_degree, bounds_lo=lo, bounds_hi=hi)
    z = model._normalize(params)
    vanders = _vanders(z, max_degree)
    rng = np.random.default_rng(seed)

    for r in range(targets.shape[0]):
        residual = targets[r].copy()
        prediction = np.zeros(p)
        row_terms: list[np.ndarray] = []
        for _ in range(max_terms):
            coeffs, ill = _fit_rank_one(residual, vanders, rng)
            model.ill_conditioned |= ill
            vals = _term_values(coeffs, vanders)
            if np.linalg.norm(residual - vals) > np.linalg.norm(residual):
                break                         # ALS failed to improve; stop
            row_terms.append(coeffs)
            residual = residual - vals
            prediction = prediction + vals
            if np.linalg.norm(vals) < tol:    # prediction change below threshold
                break
        if not row_terms:
            row_terms.append(np.zeros((q_dims, max_degree + 1)))
        model.terms.append(row_terms)
    return model


def poly_predict(model: PolyRegressor, theta: np.ndarray) -> np.ndarray:
    """Evaluate all outputs at one parameter vector."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if (theta < model.bounds_lo - 1e-12).any() or (theta > model.bounds_hi + 1e-12).any():
        warnings.warn(f"theta {theta} outside training bounds; extrapolating",
                      stacklevel=2)
    z = model._normalize(theta[None, :])
    vanders = _vanders(z, model.max_degree)
    out = np.empty(model.n_outputs)
    for r, row_terms in enumerate(model.terms):
        acc = 0.0
        for coeffs in row_terms:
            acc += float(_term_values(coeffs, vanders)[0])
        out[r] = acc
    return out


def integral_regressor_fit(params: np.ndarray, integrals: np.ndarray,
                           max_degree: int = 3, tol: float = 1e-2,
                           max_terms: int = 10, seed: int = 0) -> PolyRegressor:
    """Same machinery applied to the scalar field integrals (R = 1)."""
    integrals = np.asarray(integrals, dtype=float).reshape(1, -1)
    return poly_fit(params, integrals, max_degree=max_degree, tol=tol,
                    max_terms=max_terms, seed=seed)


def integral_regressor_predict(model: PolyRegressor, theta: np.ndarray) -> float:
    return float(poly_predict(model, theta)[0])
