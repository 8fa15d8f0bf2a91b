"""Offline training, online inference, the error metric, and the baseline."""

import mpmath
import numpy as np
import pytest

from otsm import geometry, heat
from otsm.errors import (BadWeights, InsufficientSnapshots, SizeMismatch,
                         ZeroReference)
from otsm.formats import load_model, save_model
from otsm.geometry import BarycentricWeights, StarDomainConfig
from otsm.grids import FieldSample, reference_grid
from otsm.matching import MatchConfig
from otsm.surrogate import (TrainSettings, idw_baseline, infer_cross_geometry,
                            infer_fixed_geometry, relative_error, train)

TOY = TrainSettings(n_s=80, sigma_s=0.04, n_g=60, sigma_g=0.04, degree=2,
                    regression_tol=1e-4, geometry_polish_iters=500, seed=0,
                    match=MatchConfig(generations=30))


def build_toy(n_geoms=2, n_snaps=10, settings=TOY):
    cfg = StarDomainConfig(base_radius=0.35)
    polys = [geometry.random_star_domain(seed=s + 1, config=cfg)
             for s in range(n_geoms)]
    box = geometry.reference_box_for(polys, margin=0.2)
    grid = reference_grid(box, 64, 64)
    doms = [geometry.domain_from_polygon(p, grid, steepness=100.0)
            for p in polys]
    plan = heat.lhs_sample(heat.DEFAULT_BOUNDS, n_snaps, seed=0)
    snapshots = [
        [heat.solve(heat.HeatProblem(domain=dom, theta=t, lam=l, grid=grid))
         for t, l in plan.samples]
        for dom in doms
    ]
    return doms, snapshots, plan


@pytest.fixture(scope="module")
def toy_model():
    doms, snapshots, plan = build_toy()
    model = train(doms, snapshots, plan.samples, TOY)
    return model, snapshots, plan


# ---------------------------------------------------------------------------
# training structure

def test_train_container_structure(toy_model):
    model, snapshots, plan = toy_model
    assert model.n_geometries == 2
    assert model.sgm.interpolating
    assert model.orderings.shape == (2 * 10 - 1, TOY.n_s)
    for row in model.orderings:
        assert np.array_equal(np.sort(row), np.arange(TOY.n_s))
    assert model.masks.shape[0] == 2
    assert set(model.provenance) >= {"seed", "timings", "match_cost"}
    assert set(model.provenance["timings"]) == {
        "ssm_decomposition", "ssm_matching", "ssm_training",
        "sgm_decomposition", "sgm_matching"}
    for ssm in model.ssms:
        assert ssm.pod.rank <= 10
        assert ssm.n_s == TOY.n_s


def test_train_single_geometry_non_interpolating():
    doms, snapshots, plan = build_toy(n_geoms=1, n_snaps=6,
                                      settings=TOY)
    settings = TrainSettings(n_s=40, sigma_s=0.05, n_g=40, sigma_g=0.04,
                             degree=1, geometry_polish_iters=200, seed=0)
    model = train(doms, snapshots, plan.samples, settings)
    assert model.n_geometries == 1
    assert not model.sgm.interpolating
    assert model.sgm.ensemble.orderings == []


def test_train_validation():
    doms, snapshots, plan = build_toy(n_geoms=1, n_snaps=2)
    with pytest.raises(InsufficientSnapshots):
        train([], [], plan.samples, TOY)
    with pytest.raises(SizeMismatch):
        train(doms, [], plan.samples, TOY)
    with pytest.raises(InsufficientSnapshots):
        train(doms, [snapshots[0][:1]], plan.samples[:1], TOY)


# ---------------------------------------------------------------------------
# fixed-geometry inference

def test_infer_fixed_positive_and_masked(toy_model):
    model, _, plan = toy_model
    out = infer_fixed_geometry(model, 0, plan.samples[0])
    assert (out.values >= 0).all()
    assert np.array_equal(out.grid.mask, model.masks[0])
    assert out.integral_I >= 0


def test_infer_fixed_in_sample_consistency(toy_model):
    # prediction at a training vector should track that training snapshot
    from otsm.splat import normalize_field
    model, snapshots, plan = toy_model
    for k in (0, 1):
        for p in (0, 4, 9):
            ref = normalize_field(snapshots[k][p])
            ref = ref.copy_with(values=ref.values * ref.integral_I)
            pred = infer_fixed_geometry(model, k, plan.samples[p])
            eps = relative_error(pred, ref.copy_with(values=ref.values))
            mask = ref.grid.mask
            assert np.median(np.abs(eps.values[mask])) < 0.05


def test_infer_fixed_mass_consistency(toy_model):
    # the plane integral of the inferred field is I* up to Gaussian leakage
    model, _, plan = toy_model
    out = infer_fixed_geometry(model, 0, plan.samples[2])
    total = out.values.sum() * out.grid.cell_area
    assert abs(total - out.integral_I) / out.integral_I < 0.05


def test_infer_fixed_extrapolation_warns(toy_model):
    model, _, _ = toy_model
    with pytest.warns(UserWarning, match="outside training bounds"):
        infer_fixed_geometry(model, 0, np.array([10.0, 10.0]))


# ---------------------------------------------------------------------------
# cross-geometry inference

def test_one_hot_endpoint_consistency(toy_model):
    model, _, plan = toy_model
    theta = plan.samples[3]
    for k in (0, 1):
        w = np.zeros(2)
        w[k] = 1.0
        blended, levelset = infer_cross_geometry(model, theta,
                                                 BarycentricWeights(w))
        fixed = infer_fixed_geometry(model, k, theta)
        assert np.abs(blended.values - fixed.values).max() <= 1e-12
        assert np.array_equal(blended.grid.mask, fixed.grid.mask)
        assert levelset.values.max() == pytest.approx(1.0)


def test_cross_geometry_blend_structure(toy_model):
    model, _, plan = toy_model
    theta = plan.samples[5]
    out, levelset = infer_cross_geometry(model, theta,
                                         BarycentricWeights([0.5, 0.5]))
    assert (out.values >= 0).all()
    assert np.array_equal(out.grid.mask, levelset.values >= 0.5)
    # blended mask is a sensible region, not empty and not the whole box
    frac = out.grid.mask.mean()
    assert 0.05 < frac < 0.8
    # integral blends linearly
    a = infer_fixed_geometry(model, 0, theta).integral_I
    b = infer_fixed_geometry(model, 1, theta).integral_I
    assert out.integral_I == pytest.approx(0.5 * a + 0.5 * b, rel=1e-12)


def test_cross_geometry_weight_count_checked(toy_model):
    model, _, plan = toy_model
    with pytest.raises(BadWeights):
        infer_cross_geometry(model, plan.samples[0],
                             BarycentricWeights([0.5, 0.25, 0.25]))


# ---------------------------------------------------------------------------
# relative error metric

def test_relative_error_trivials(unit_grid):
    ref = FieldSample(grid=unit_grid, values=np.full((33, 33), 2.0))
    same = FieldSample(grid=unit_grid, values=np.full((33, 33), 2.0))
    assert np.abs(relative_error(same, ref).values).max() == 0.0
    shifted = FieldSample(grid=unit_grid, values=np.full((33, 33), 2.3))
    eps = relative_error(shifted, ref)
    assert np.allclose(eps.values, 0.3 / 2.0)


def test_relative_error_matches_extended_precision_oracle():
    rng = np.random.default_rng(0)
    grid = reference_grid((-1.0, 1.0, -1.0, 1.0), 9, 9)
    mask = rng.random((9, 9)) > 0.3
    grid = grid.with_mask(mask)
    ref = FieldSample(grid=grid, values=rng.random((9, 9)) + 0.5)
    pred = FieldSample(grid=grid, values=rng.random((9, 9)) + 0.5)
    eps = relative_error(pred, ref)
    with mpmath.workdps(50):
        cell = mpmath.mpf(float(grid.cell_area))
        area = cell * int(mask.sum())
        acc = mpmath.mpf(0)
        for v in ref.values[mask]:
            acc += mpmath.mpf(float(v)) ** 2
        denom = mpmath.sqrt(acc * cell / area)
        j, i = np.argwhere(mask)[7]
        oracle = (mpmath.mpf(float(pred.values[j, i]))
                  - mpmath.mpf(float(ref.values[j, i]))) / denom
    assert eps.values[j, i] == pytest.approx(float(oracle), rel=1e-13)


def test_relative_error_requires_matching_masks(unit_grid):
    ref = FieldSample(grid=unit_grid, values=np.ones((33, 33)))
    other_mask = np.ones((33, 33), dtype=bool)
    other_mask[0, 0] = False
    pred = FieldSample(grid=unit_grid.with_mask(other_mask),
                       values=np.ones((33, 33)))
    with pytest.raises(SizeMismatch):
        relative_error(pred, ref)


def test_relative_error_zero_reference(unit_grid):
    ref = FieldSample(grid=unit_grid, values=np.zeros((33, 33)))
    pred = FieldSample(grid=unit_grid, values=np.ones((33, 33)))
    with pytest.raises(ZeroReference):
        relative_error(pred, ref)


# ---------------------------------------------------------------------------
# IDW baseline

def test_idw_short_circuit(unit_grid):
    rng = np.random.default_rng(1)
    snaps = [FieldSample(grid=unit_grid, values=rng.random((33, 33)))
             for _ in range(3)]
    params = np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.2]])
    out = idw_baseline(snaps, params, np.array([0.5, 0.5]))
    assert np.array_equal(out.values, snaps[1].values)


def test_idw_equidistant_mean(unit_grid):
    rng = np.random.default_rng(2)
    snaps = [FieldSample(grid=unit_grid, values=rng.random((33, 33)))
             for _ in range(2)]
    params = np.array([[0.0, 0.0], [1.0, 0.0]])
    out = idw_baseline(snaps, params, np.array([0.5, 0.0]))
    assert np.allclose(out.values, 0.5 * (snaps[0].values + snaps[1].values))


def test_idw_far_outside_nearest_fallback(unit_grid):
    snaps = [FieldSample(grid=unit_grid, values=np.full((33, 33), float(i)))
             for i in range(2)]
    params = np.array([[0.0, 0.0], [1.0, 0.0]])
    out = idw_baseline(snaps, params, np.array([1e6, 0.0]), rbf_scale=0.1)
    assert np.allclose(out.values, 1.0)


def test_idw_needs_snapshots():
    with pytest.raises(InsufficientSnapshots):
        idw_baseline([], np.zeros((0, 2)), np.zeros(2))


# ---------------------------------------------------------------------------
# serialization

def test_model_round_trip_and_determinism(toy_model, tmp_path):
    model, snapshots, plan = toy_model
    p1, p2 = tmp_path / "a.otsm", tmp_path / "b.otsm"
    save_model(p1, model)
    save_model(p2, model)
    assert p1.read_bytes() == p2.read_bytes()

    back = load_model(p1)
    theta = plan.samples[1]
    for k in (0, 1):
        a = infer_fixed_geometry(model, k, theta)
        b = infer_fixed_geometry(back, k, theta)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.grid.mask, b.grid.mask)
    wa, _ = infer_cross_geometry(model, theta, BarycentricWeights([0.3, 0.7]))
    wb, _ = infer_cross_geometry(back, theta, BarycentricWeights([0.3, 0.7]))
    assert np.array_equal(wa.values, wb.values)


def test_retrain_same_seed_serializes_identically(tmp_path):
    settings = TrainSettings(n_s=30, sigma_s=0.05, n_g=30, sigma_g=0.04,
                             degree=1, geometry_polish_iters=200, seed=0,
                             match=MatchConfig(generations=10))
    doms, snapshots, plan = build_toy(n_geoms=2, n_snaps=5)
    m1 = train(doms, snapshots, plan.samples, settings)
    m2 = train(doms, snapshots, plan.samples, settings)
    p1, p2 = tmp_path / "m1.otsm", tmp_path / "m2.otsm"
    save_model(p1, m1)
    save_model(p2, m2)
    assert p1.read_bytes() == p2.read_bytes()
