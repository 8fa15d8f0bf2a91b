"""Splatting: normalization, evaluation, decomposition, and the sign split."""

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otsm.errors import InvalidBandwidth, NonPositiveField, SizeMismatch
from otsm.grids import FieldSample, reference_grid
from otsm.splat import (ParticleCloud, decompose, decomposition_objective,
                        evaluate_cloud, evaluate_cloud_at, normalize_field,
                        sample_initial_centers, split_signed,
                        transport_initial_centers)
from conftest import gaussian_bump_field


def random_cloud(rng, n, sigma=0.05, scale=0.6):
    return ParticleCloud(centers=scale * (rng.random((n, 2)) - 0.5), sigma=sigma)


# ---------------------------------------------------------------------------
# normalize_field

def test_normalize_constant_field_unit_area():
    # constant c over a unit-area masked region integrates to c
    grid = reference_grid((0.0, 1.25, 0.0, 1.25), 26, 26)   # spacing 0.05
    mask = np.zeros((26, 26), dtype=bool)
    mask[:20, :20] = True                                    # 400 cells = area 1
    grid = grid.with_mask(mask)
    raw = FieldSample(grid=grid, values=np.full((26, 26), 3.7))
    out = normalize_field(raw)
    assert out.integral_I == pytest.approx(3.7)
    assert np.allclose(out.values[mask], 1.0)


def test_normalize_zero_field_raises(unit_grid):
    raw = FieldSample(grid=unit_grid, values=np.zeros((33, 33)))
    with pytest.raises(NonPositiveField):
        normalize_field(raw)


def test_normalize_negative_field_raises(unit_grid):
    values = np.ones((33, 33))
    values[0, 0] = -1e-3
    with pytest.raises(NonPositiveField):
        normalize_field(FieldSample(grid=unit_grid, values=values))


def test_normalize_heat_snapshot_against_refined_quadrature(star_setup):
    # Richardson-refined quadrature oracle: solve the same problem on finer
    # grids and extrapolate the masked integral
    from otsm import heat
    poly, _, _ = star_setup
    from otsm.geometry import domain_from_polygon, reference_box_for
    box = reference_box_for([poly], margin=0.2)
    integrals = {}
    for n in (64, 128, 256):
        grid = reference_grid(box, n, n)
        dom = domain_from_polygon(poly, grid)
        snap = heat.solve(heat.HeatProblem(domain=dom, theta=0.25 * np.pi,
                                           lam=0.3, grid=grid))
        integrals[n] = snap.masked_integral()
    # Richardson extrapolation assuming ~2nd order
    oracle = integrals[256] + (integrals[256] - integrals[128]) / 3.0
    grid = reference_grid(box, 128, 128)
    dom = domain_from_polygon(poly, grid)
    snap = heat.solve(heat.HeatProblem(domain=dom, theta=0.25 * np.pi,
                                       lam=0.3, grid=grid))
    main = normalize_field(snap).integral_I
    assert abs(main - oracle) / oracle < 1e-3


# ---------------------------------------------------------------------------
# evaluate_cloud

def test_single_particle_peak_closed_form():
    sigma = 0.03
    grid = reference_grid((-1.0, 1.0, -1.0, 1.0), 41, 41)
    center = np.array([[grid.xs[20], grid.ys[20]]])
    cloud = ParticleCloud(centers=center, sigma=sigma)
    out = evaluate_cloud(cloud, grid)
    assert out.values[20, 20] == pytest.approx(1.0 / (sigma ** 2 * 2 * np.pi))


def test_plane_integral_is_one_on_refined_grid():
    rng = np.random.default_rng(3)
    cloud = random_cloud(rng, 40, sigma=0.05)
    # box padded well beyond 4 sigma past all centers
    grid = reference_grid((-1.0, 1.0, -1.0, 1.0), 256, 256)
    total = evaluate_cloud(cloud, grid).values.sum() * grid.cell_area
    assert abs(total - 1.0) < 0.01


def test_two_particle_value_matches_extended_precision_oracle():
    sigma = 0.05
    cloud = ParticleCloud(centers=np.array([[0.1, 0.0], [-0.1, 0.0]]), sigma=sigma)
    got = float(evaluate_cloud_at(cloud, np.array([[0.0, 0.0]]))[0])
    with mpmath.workdps(50):
        s = mpmath.mpf(sigma)
        acc = mpmath.mpf(0)
        for cx, cy in cloud.centers:
            d2 = mpmath.mpf(float(cx)) ** 2 + mpmath.mpf(float(cy)) ** 2
            acc += mpmath.e ** (-d2 / (2 * s ** 2))
        oracle = acc / (2 * 2 * mpmath.pi * s ** 2)
    assert got == pytest.approx(float(oracle), rel=1e-12)


def test_positivity_everywhere(unit_grid):
    cloud = random_cloud(np.random.default_rng(0), 10)
    assert (evaluate_cloud(cloud, unit_grid).values > 0).all()


@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
@settings(max_examples=20, deadline=None)
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    cloud = random_cloud(rng, 8)
    grid = reference_grid((-1.0, 1.0, -1.0, 1.0), 17, 17)
    perm = rng.permutation(8)
    a = evaluate_cloud(cloud, grid).values
    b = evaluate_cloud(cloud.permuted(perm), grid).values
    # summation order differs, so equality holds to rounding only
    assert np.allclose(a, b, rtol=1e-13, atol=0.0)


def test_grid_evaluation_matches_pointwise_evaluation(unit_grid):
    cloud = random_cloud(np.random.default_rng(5), 12)
    on_grid = evaluate_cloud(cloud, unit_grid).values
    at_points = evaluate_cloud_at(cloud, unit_grid.nodes()).reshape(33, 33)
    assert np.allclose(on_grid, at_points, rtol=1e-12, atol=1e-15)


# ---------------------------------------------------------------------------
# decompose

def test_decompose_recovers_exact_cloud():
    sigma = 0.12
    rng = np.random.default_rng(11)
    truth = ParticleCloud(centers=0.8 * (rng.random((5, 2)) - 0.5), sigma=sigma)
    grid = reference_grid((-1.0, 1.0, -1.0, 1.0), 64, 64)
    target = evaluate_cloud(truth, grid)
    target = target.copy_with(values=target.values
                              / target.masked_integral(), integral_I=1.0)
    fit = decompose(target, 5, sigma, seed=2, tol=1e-12, max_iter=20000)
    assert fit.meta["objective"] < 1e-10
    # match particles to the truth up to permutation
    from scipy.optimize import linear_sum_assignment
    cost = ((fit.centers[:, None, :] - truth.centers[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    assert np.abs(fit.centers[rows] - truth.centers[cols]).max() < 1e-4


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(7)
    grid = reference_grid((-1.0, 1.0, -1.0, 1.0), 33, 33)
    target = gaussian_bump_field(grid, (0.1, -0.2))
    target = normalize_field(target)
    centers = 0.5 * (rng.random((10, 2)) - 0.5)
    sigma = 0.15
    _, grad = decomposition_objective(centers, sigma, target)
    step = 1e-6
    for idx in [(0, 0), (3, 1), (7, 0), (9, 1)]:
        bumped = centers.copy()
        bumped[idx] += step
        up, _ = decomposition_objective(bumped, sigma, target)
        bumped[idx] -= 2 * step
        down, _ = decomposition_objective(bumped, sigma, target)
        fd = (up - down) / (2 * step)
        assert abs(grad[idx] - fd) / max(abs(fd), 1e-12) < 1e-5


def test_decompose_requires_normalized_target(unit_grid):
    raw = gaussian_bump_field(unit_grid, (0.0, 0.0))
    with pytest.raises(ValueError):
        decompose(raw, 4, 0.1)


def test_decompose_rejects_bad_sigma(unit_grid):
    target = normalize_field(gaussian_bump_field(unit_grid, (0.0, 0.0)))
    with pytest.raises(InvalidBandwidth):
        decompose(target, 4, -1.0)


def test_decompose_init_cloud_size_checked(unit_grid):
    target = normalize_field(gaussian_bump_field(unit_grid, (0.0, 0.0)))
    wrong = ParticleCloud(centers=np.zeros((3, 2)), sigma=0.1)
    with pytest.raises(SizeMismatch):
        decompose(target, 4, 0.1, init=wrong)


def test_decompose_deterministic(unit_grid):
    target = normalize_field(gaussian_bump_field(unit_grid, (0.2, 0.1)))
    a = decompose(target, 6, 0.15, seed=4, max_iter=200)
    b = decompose(target, 6, 0.15, seed=4, max_iter=200)
    assert np.array_equal(a.centers, b.centers)


def test_decompose_meta_diagnostics(unit_grid):
    target = normalize_field(gaussian_bump_field(unit_grid, (0.0, 0.0)))
    cloud = decompose(target, 6, 0.15, seed=0, max_iter=300)
    meta = cloud.meta
    assert {"objective", "iterations", "converged", "leaked_mass"} <= set(meta)
    assert meta["objective"] >= 0
    assert -0.02 < meta["leaked_mass"] < 1.0


def test_objective_decreases_from_initial(unit_grid):
    target = normalize_field(gaussian_bump_field(unit_grid, (0.0, 0.0)))
    rng = np.random.default_rng(0)
    init = sample_initial_centers(target, 6, rng)
    start, _ = decomposition_objective(init, 0.15, target)
    cloud = decompose(target, 6, 0.15,
                      init=ParticleCloud(init, 0.15), max_iter=300)
    assert cloud.meta["objective"] <= start


def test_transport_init_quality_beats_sampling(heat_snapshot):
    # on a heat snapshot the transport quantization should reconstruct the
    # bulk much better than raw importance sampling does
    rho = normalize_field(heat_snapshot)
    grid = rho.grid
    mask = grid.mask
    n = 200
    sampled = sample_initial_centers(rho, n, np.random.default_rng(0))
    moved = transport_initial_centers(rho, n, 0.05, seed=0)

    def masked_l2(centers):
        recon = evaluate_cloud(ParticleCloud(centers, 0.05), grid).values
        return float(((recon - rho.values)[mask] ** 2).sum())

    assert masked_l2(moved) < 0.5 * masked_l2(sampled)


def test_transport_init_deterministic(heat_snapshot):
    rho = normalize_field(heat_snapshot)
    a = transport_initial_centers(rho, 50, 0.05, seed=3)
    b = transport_initial_centers(rho, 50, 0.05, seed=3)
    assert np.array_equal(a, b)


def test_transport_init_centers_inside_support(heat_snapshot):
    # barycentric updates keep every site in the convex hull of masked nodes
    rho = normalize_field(heat_snapshot)
    centers = transport_initial_centers(rho, 80, 0.05, seed=1)
    grid = rho.grid
    jy, jx = np.nonzero(grid.mask)
    assert centers[:, 0].min() >= grid.xs[jx].min() - 1e-9
    assert centers[:, 0].max() <= grid.xs[jx].max() + 1e-9
    assert centers[:, 1].min() >= grid.ys[jy].min() - 1e-9
    assert centers[:, 1].max() <= grid.ys[jy].max() + 1e-9


# ---------------------------------------------------------------------------
# split_signed

def test_split_signed_one_sided(unit_grid):
    raw = gaussian_bump_field(unit_grid, (0.0, 0.0))
    pos, neg = split_signed(raw)
    assert np.array_equal(pos.values, raw.values)
    assert not neg.values.any()


def test_split_signed_linear_field():
    grid = reference_grid((0.0, 1.0, 0.0, 1.0), 21, 21)
    xx, _ = np.meshgrid(grid.xs, grid.ys)
    raw = FieldSample(grid=grid, values=xx - 0.5)
    pos, neg = split_signed(raw)
    assert np.array_equal(pos.values - neg.values, raw.values)
    assert (pos.values >= 0).all() and (neg.values >= 0).all()


@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
@settings(max_examples=25, deadline=None)
def test_split_signed_recombines_exactly(seed):
    rng = np.random.default_rng(seed)
    grid = reference_grid((-1.0, 1.0, -1.0, 1.0), 9, 9)
    raw = FieldSample(grid=grid, values=rng.standard_normal((9, 9)))
    pos, neg = split_signed(raw)
    assert np.array_equal(pos.values - neg.values, raw.values)
