import numpy as np
import pytest

from forestalign.geometry import PointCloud, RigidTransform, apply_transform
from forestalign.scene import SceneSpec, synth_forest_scene


def centered(cloud: PointCloud) -> PointCloud:
    lower, upper = cloud.bounds()
    return apply_transform(cloud, RigidTransform(np.eye(3), -(lower + upper) / 2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def plane_cloud():
    """Flat z = 0 plane, 0.1 m grid, 3 x 3 m"""
    xs, ys = np.meshgrid(np.arange(0.0, 3.0, 0.1), np.arange(0.0, 3.0, 0.1), indexing='ij')
    return PointCloud(np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)]))


@pytest.fixture(scope='session')
def small_scene_spec():
    return SceneSpec(extent=12.0, ground_amplitude=0.2, n_trees=4, points_per_tree=1500, seed=7)


@pytest.fixture(scope='session')
def small_scene(small_scene_spec):
    """Labeled 12 m plot with four trees, centred on the origin"""
    return centered(synth_forest_scene(small_scene_spec))


@pytest.fixture(scope='session')
def flat_scene():
    spec = SceneSpec(extent=12.0, ground_amplitude=0.0, n_trees=4, points_per_tree=1500, seed=11)
    return centered(synth_forest_scene(spec))
