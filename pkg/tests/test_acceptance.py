"""
Desk-scale acceptance experiments on synthetic forest plots.
Deselected by default; run with `pytest -m slow`.
"""

import numpy as np
import pytest

from forestalign.config import K_ALS, K_TREELESS, ForestAlignConfig
from forestalign.evaluation import TrialSpec, compare_methods, run_trials
from forestalign.geometry import RigidTransform, apply_transform
from forestalign.registration import forest_align, group_cloud
from forestalign.scene import SceneLabel, SceneSpec, make_view_pair, sparsify_as_als, synth_forest_scene

pytestmark = pytest.mark.slow

ROTATION_TOL = 0.75
TRANSLATION_TOL = 0.055


@pytest.fixture(scope='module')
def default_scene():
    return synth_forest_scene(SceneSpec(seed=0))


def assert_rmse_below(report, rotation_tol, translation_tol):
    assert report.n_failed == 0, [row.error for row in report.rows if row.failed]
    assert np.all(report.rmse[:3] < rotation_tol), report.rmse_dict()
    assert np.all(report.rmse[3:] < translation_tol), report.rmse_dict()


def test_recovers_yaw_and_offset_from_identity(default_scene):
    truth = RigidTransform.from_euler(0.0, 0.0, 25.0, (10.0, 0.0, 0.0))
    pair = make_view_pair(default_scene, 0.3, seed=1)
    # source scan posed by `truth` relative to the target frame
    source = apply_transform(apply_transform(pair.source, pair.truth), truth.inverse())
    result = forest_align(source, pair.target, ForestAlignConfig(seed=0))
    residual = result.final.compose(truth.inverse())
    assert residual.rotation_angle() < ROTATION_TOL
    assert np.linalg.norm(result.final.translation - truth.translation) < TRANSLATION_TOL


@pytest.mark.parametrize('overlap', [0.3, 0.15, 0.05])
def test_tls_to_tls_trials(default_scene, overlap):
    truth = RigidTransform.from_euler(0.0, 0.0, 10.0, (2.0, -1.0, 0.5))
    pair = make_view_pair(default_scene, overlap, truth, seed=2)
    report = run_trials(pair.source, pair.target, pair.truth, TrialSpec(45.0, 15.0, 20, seed=0),
                        ForestAlignConfig(seed=0))
    translation_tol = TRANSLATION_TOL if overlap == 0.3 else 0.07
    assert_rmse_below(report, ROTATION_TOL, translation_tol)


def test_tls_to_als_trials(default_scene):
    truth = RigidTransform.from_euler(0.0, 0.0, 10.0, (2.0, -1.0, 0.5))
    pair = make_view_pair(default_scene, 0.3, truth, seed=3)
    target = sparsify_as_als(pair.target, density=15.0, seed=3)
    cfg = ForestAlignConfig(k_target=K_ALS, radius=1.0, seed=0)
    report = run_trials(pair.source, target, pair.truth, TrialSpec(45.0, 15.0, 20, seed=1), cfg)
    assert_rmse_below(report, 0.8, 0.08)


def test_treeless_trials():
    scene = synth_forest_scene(SceneSpec(extent=60.0, n_trees=0, grass_density=10.0, seed=4))
    truth = RigidTransform.from_euler(0.0, 0.0, 5.0, (1.0, 1.0, 0.0))
    pair = make_view_pair(scene, 0.5, truth, seed=4)
    cfg = ForestAlignConfig(k_source=K_TREELESS, k_target=K_TREELESS, seed=0)
    report = run_trials(pair.source, pair.target, pair.truth, TrialSpec(20.0, 5.0, 20, seed=2), cfg)
    assert_rmse_below(report, 1.0, 0.1)


def test_incremental_beats_plain_icp():
    spec = SceneSpec(extent=60.0, n_trees=25, points_per_tree=6000, foliage_fraction=0.8, seed=5)
    scene = synth_forest_scene(spec)
    truth = RigidTransform.identity()
    pair = make_view_pair(scene, 0.6, truth, seed=5)
    reports = compare_methods(pair.source, pair.target, pair.truth, TrialSpec(30.0, 10.0, 50, seed=3),
                              ForestAlignConfig(seed=0))
    assert reports['forest_align'].success_rate() > reports['plain_icp'].success_rate()


def test_ground_lands_in_the_most_concentrated_level():
    hits = 0
    for seed in range(20):
        scene = synth_forest_scene(SceneSpec(extent=30.0, n_trees=8, points_per_tree=3000, seed=seed))
        grouped = group_cloud(scene, 3, ForestAlignConfig(), seed=seed)
        ground = (grouped.cloud.labels == SceneLabel.GROUND) & grouped.normals.valid
        if np.mean(grouped.mixture.labels[ground] == 1) >= 0.8:
            hits += 1
    assert hits >= 18


def test_runs_are_reproducible(default_scene):
    truth = RigidTransform.from_euler(0.0, 0.0, 10.0, (2.0, -1.0, 0.5))
    pair = make_view_pair(default_scene, 0.3, truth, seed=6)
    moved = apply_transform(pair.source, RigidTransform.from_euler(0.0, 0.0, 20.0, (5.0, 0.0, 0.0)))
    a = forest_align(moved, pair.target, ForestAlignConfig(seed=0))
    b = forest_align(moved, pair.target, ForestAlignConfig(seed=0))
    np.testing.assert_array_equal(a.final.matrix, b.final.matrix)


@pytest.fixture(scope='module')
def small_plot_pair():
    scene = synth_forest_scene(SceneSpec(extent=30.0, n_trees=8, points_per_tree=3000, seed=8))
    truth = RigidTransform.from_euler(0.0, 0.0, 10.0, (2.0, -1.0, 0.5))
    return make_view_pair(scene, 0.5, truth, seed=8)


@pytest.mark.parametrize('rot_range, trans_range', [(5.0, 1.0), (10.0, 3.0), (45.0, 15.0)])
def test_small_plot_trials_are_captured(small_plot_pair, rot_range, trans_range):
    pair = small_plot_pair
    report = run_trials(pair.source, pair.target, pair.truth,
                        TrialSpec(rot_range, trans_range, 6, seed=0), ForestAlignConfig(seed=0))
    assert report.n_failed == 0, [row.error for row in report.rows if row.failed]
    assert report.success_rate() >= 5 / 6, report.rmse_dict()


def test_final_stage_never_ends_worse_than_ground_stage():
    holds = 0
    for seed in range(20):
        scene = synth_forest_scene(SceneSpec(extent=30.0, n_trees=8, points_per_tree=3000, seed=seed))
        truth = RigidTransform.from_euler(0.0, 0.0, 5.0, (1.0, 0.5, 0.2))
        pair = make_view_pair(scene, 0.6, truth, seed=seed)
        result = forest_align(pair.source, pair.target, ForestAlignConfig(seed=seed))
        ground_stage, final_stage = result.per_level[0], result.per_level[-1]
        assert ground_stage.stage == 'level-1' and final_stage.stage == 'refine'
        if final_stage.inlier_rmse <= ground_stage.inlier_rmse:
            holds += 1
    assert holds >= 19
