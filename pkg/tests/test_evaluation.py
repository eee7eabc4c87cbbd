"""Tests for forestalign.evaluation: metrics and the trial protocol."""

import numpy as np
import pytest

import forestalign.evaluation as evaluation
from forestalign.config import ForestAlignConfig
from forestalign.errors import NoOverlapError
from forestalign.evaluation import (TrialSpec, inlier_rmse, overlap_percent, pair_overlap_percent,
                                    param_errors, param_rmse, perturb_transform, run_trials,
                                    wrap_degrees)
from forestalign.geometry import PointCloud, RigidTransform


def test_wrap_degrees():
    np.testing.assert_allclose(wrap_degrees([0.0, 180.0, -180.0, 181.0, 359.0, -540.0]),
                               [0.0, 180.0, 180.0, -179.0, -1.0, 180.0])


def test_param_rmse_of_truth_is_zero():
    truth = RigidTransform.from_euler6([5.0, 2.0, -30.0, 1.0, 2.0, 3.0])
    np.testing.assert_allclose(param_rmse([truth], truth), np.zeros(6), atol=1e-9)


def test_param_rmse_single_offset():
    truth = RigidTransform.identity()
    estimate = RigidTransform.from_euler6([1.0, 0.0, 0.0, 0.0, 0.0, 0.02])
    np.testing.assert_allclose(param_rmse([estimate], truth), [1.0, 0.0, 0.0, 0.0, 0.0, 0.02], atol=1e-9)


def test_param_rmse_wraps_angles():
    truth = RigidTransform.from_euler(0.0, 0.0, 180.0)
    estimates = [RigidTransform.from_euler(0.0, 0.0, 179.0), RigidTransform.from_euler(0.0, 0.0, -179.0)]
    assert param_rmse(estimates, truth)[2] == pytest.approx(1.0, abs=1e-9)
    shifted = [RigidTransform.from_euler(0.0, 0.0, 179.0 + 360.0), estimates[1]]
    np.testing.assert_allclose(param_rmse(shifted, truth), param_rmse(estimates, truth), atol=1e-9)


def test_overlap_of_identical_and_disjoint_clouds(rng):
    cloud = PointCloud(rng.uniform(0.0, 1.0, size=(500, 3)))
    far = PointCloud(cloud.points + 100.0)
    identity = RigidTransform.identity()
    assert overlap_percent(cloud, cloud, identity) == pytest.approx(100.0)
    assert overlap_percent(cloud, far, identity) == pytest.approx(0.0)


def test_half_overlapping_squares(rng):
    def square(x0):
        xy = rng.uniform(0.0, 1.0, size=(40000, 2)) + [x0, 0.0]
        return PointCloud(np.column_stack([xy, np.zeros(len(xy))]))

    source, target = square(0.0), square(0.5)
    value = overlap_percent(source, target, RigidTransform.identity(), threshold=0.01)
    assert 48.0 <= value <= 53.0
    symmetric = pair_overlap_percent(source, target, RigidTransform.identity(), threshold=0.01)
    assert 48.0 <= symmetric <= 53.0


def test_overlap_grows_with_threshold(rng):
    source = PointCloud(rng.uniform(0.0, 1.0, size=(300, 3)))
    target = PointCloud(rng.uniform(0.0, 1.0, size=(300, 3)) + [0.3, 0.0, 0.0])
    values = [overlap_percent(source, target, RigidTransform.identity(), t) for t in (0.02, 0.05, 0.1, 0.3)]
    assert all(0.0 <= v <= 100.0 for v in values)
    assert values == sorted(values)


def test_inlier_rmse(plane_cloud):
    assert inlier_rmse(plane_cloud, plane_cloud, RigidTransform.identity()) == pytest.approx(0.0)
    shifted = PointCloud(plane_cloud.points + [0.1, 0.0, 0.0])
    value = inlier_rmse(plane_cloud, shifted, RigidTransform.identity())
    assert value < 0.1
    assert value <= 0.25


def test_inlier_rmse_without_overlap(plane_cloud):
    far = PointCloud(plane_cloud.points + 50.0)
    with pytest.raises(NoOverlapError):
        inlier_rmse(plane_cloud, far, RigidTransform.identity())


def test_perturbation_with_zero_ranges_is_truth():
    truth = RigidTransform.from_euler6([3.0, -7.0, 25.0, 10.0, 0.0, -1.0])
    perturbed = perturb_transform(truth, TrialSpec(rot_range=0.0, trans_range=0.0), 3)
    np.testing.assert_allclose(perturbed.matrix, truth.matrix, atol=1e-9)


def test_perturbation_is_deterministic():
    spec = TrialSpec(seed=42)
    a = perturb_transform(RigidTransform.identity(), spec, 5)
    b = perturb_transform(RigidTransform.identity(), spec, 5)
    np.testing.assert_array_equal(a.matrix, b.matrix)
    c = perturb_transform(RigidTransform.identity(), spec, 6)
    assert not np.array_equal(a.matrix, c.matrix)


def test_perturbation_bounds_and_mean():
    spec = TrialSpec(rot_range=45.0, trans_range=15.0, seed=0)
    offsets = np.array([param_errors(perturb_transform(RigidTransform.identity(), spec, i),
                                     RigidTransform.identity()) for i in range(1000)])
    assert np.all(np.abs(offsets[:, :3]) <= 45.0 + 1e-9)
    assert np.all(np.abs(offsets[:, 3:]) <= 15.0 + 1e-9)
    standard_error = np.array([45.0] * 3 + [15.0] * 3) / np.sqrt(3.0) / np.sqrt(1000)
    assert np.all(np.abs(offsets.mean(axis=0)) <= 4 * standard_error)


def test_trials_on_identical_clouds_are_exact(small_scene):
    spec = TrialSpec(rot_range=0.0, trans_range=0.0, n_trials=1, seed=0)
    report = run_trials(small_scene, small_scene, RigidTransform.identity(), spec, ForestAlignConfig())
    assert len(report.rows) == 1
    assert report.n_failed == 0
    np.testing.assert_allclose(report.rows[0].initial_error, np.zeros(6), atol=1e-9)
    np.testing.assert_allclose(report.rows[0].final_error, np.zeros(6), atol=1e-6)
    assert report.rows[0].overlap_percent == pytest.approx(100.0)


def test_report_rmse_matches_rows(small_scene):
    spec = TrialSpec(rot_range=0.5, trans_range=0.05, n_trials=3, seed=1)
    report = run_trials(small_scene, small_scene, RigidTransform.identity(), spec,
                        ForestAlignConfig(), method='plain_icp')
    errors = np.array([row.final_error for row in report.rows if not row.failed])
    np.testing.assert_allclose(report.rmse, np.sqrt(np.mean(errors ** 2, axis=0)))
    assert 0.0 <= report.success_rate() <= 1.0


def test_parallel_trials_match_sequential(small_scene):
    spec = TrialSpec(rot_range=0.5, trans_range=0.05, n_trials=3, seed=2)
    cfg = ForestAlignConfig()
    sequential = run_trials(small_scene, small_scene, RigidTransform.identity(), spec, cfg, 'plain_icp')
    parallel = run_trials(small_scene, small_scene, RigidTransform.identity(), spec, cfg, 'plain_icp',
                          workers=3)
    for a, b in zip(sequential.rows, parallel.rows):
        assert a.trial == b.trial
        np.testing.assert_array_equal(a.final_error, b.final_error)


def test_failed_trials_are_recorded(small_scene, monkeypatch):
    def broken(source, target, cfg):
        raise NoOverlapError("nothing within reach")

    monkeypatch.setitem(evaluation.ALIGNERS, 'broken', broken)
    spec = TrialSpec(rot_range=1.0, trans_range=0.1, n_trials=2)
    report = run_trials(small_scene, small_scene, RigidTransform.identity(), spec, method='broken')
    assert report.n_failed == 2
    assert all('nothing within reach' in row.error for row in report.rows)
    assert np.all(np.isnan(report.rmse))
    assert report.success_rate() == 0.0


def test_invalid_trial_spec():
    with pytest.raises(ValueError):
        TrialSpec(n_trials=0).validate()
    with pytest.raises(ValueError):
        TrialSpec(rot_range=-1.0).validate()
