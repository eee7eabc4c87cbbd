"""Tests for forestalign.geometry: clouds, transforms, voxel grid, kd-tree queries."""

import numpy as np
import pytest

from forestalign.errors import EmptyInputError, InvalidParameterError
from forestalign.geometry import (PointCloud, RigidTransform, SpatialIndex, apply_transform,
                                  compose, euler_to_rotation, invert, rotation_to_euler,
                                  voxel_downsample)


def test_yaw_rotates_x_onto_y():
    """A +90 degree yaw maps the x axis onto the y axis."""
    R = euler_to_rotation(0.0, 0.0, 90.0)
    np.testing.assert_allclose(R @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)


def test_euler_order_is_yaw_pitch_roll():
    """R = Rz(yaw) Ry(pitch) Rx(roll)."""
    roll, pitch, yaw = np.radians([10.0, -20.0, 30.0])
    Rx = np.array([[1, 0, 0], [0, np.cos(roll), -np.sin(roll)], [0, np.sin(roll), np.cos(roll)]])
    Ry = np.array([[np.cos(pitch), 0, np.sin(pitch)], [0, 1, 0], [-np.sin(pitch), 0, np.cos(pitch)]])
    Rz = np.array([[np.cos(yaw), -np.sin(yaw), 0], [np.sin(yaw), np.cos(yaw), 0], [0, 0, 1]])
    np.testing.assert_allclose(euler_to_rotation(10.0, -20.0, 30.0), Rz @ Ry @ Rx, atol=1e-12)


@pytest.mark.parametrize('angles', [(0.0, 0.0, 0.0), (12.5, -40.0, 170.0), (-89.0, 45.0, -179.0)])
def test_euler_round_trip(angles):
    np.testing.assert_allclose(rotation_to_euler(euler_to_rotation(*angles)), angles, atol=1e-9)


def test_compose_with_inverse_is_identity():
    T = RigidTransform.from_euler(5.0, -3.0, 25.0, (1.0, 2.0, -0.5))
    np.testing.assert_allclose(T.compose(T.inverse()).matrix, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(compose(invert(T), T).matrix, np.eye(4), atol=1e-12)


def test_compose_applies_right_operand_first(rng):
    a = RigidTransform.from_euler(0.0, 0.0, 30.0, (1.0, 0.0, 0.0))
    b = RigidTransform.from_euler(10.0, 0.0, 0.0, (0.0, 2.0, 0.0))
    points = rng.normal(size=(5, 3))
    np.testing.assert_allclose(a.compose(b).apply(points), a.apply(b.apply(points)), atol=1e-12)


def test_matrix_and_euler6_agree():
    T = RigidTransform.from_euler6([3.0, 4.0, -60.0, 10.0, -2.0, 0.25])
    again = RigidTransform.from_matrix(T.matrix)
    np.testing.assert_allclose(again.to_euler6(), [3.0, 4.0, -60.0, 10.0, -2.0, 0.25], atol=1e-9)
    assert again.is_proper()


def test_reflection_is_not_proper():
    assert not RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3)).is_proper()


def test_rotation_angle():
    assert RigidTransform.from_euler(0.0, 0.0, 37.0).rotation_angle() == pytest.approx(37.0)
    assert RigidTransform.identity().rotation_angle() == pytest.approx(0.0, abs=1e-6)


def test_from_matrix_rejects_wrong_shape():
    with pytest.raises(InvalidParameterError):
        RigidTransform.from_matrix(np.eye(3))


def test_transforms_are_isometries(rng):
    points = rng.normal(scale=10.0, size=(50, 3))
    before = np.linalg.norm(points[:, None] - points[None, :], axis=2)
    for params in rng.uniform([-180.0, -89.0, -180.0, -50.0, -50.0, -50.0],
                              [180.0, 89.0, 180.0, 50.0, 50.0, 50.0], size=(20, 6)):
        T = RigidTransform.from_euler6(params)
        moved = T.apply(points)
        np.testing.assert_allclose(np.linalg.norm(moved[:, None] - moved[None, :], axis=2), before,
                                   atol=1e-9)
        assert np.linalg.det(T.rotation) == pytest.approx(1.0, abs=1e-12)


def test_point_cloud_validation():
    with pytest.raises(InvalidParameterError):
        PointCloud(np.zeros((4, 2)))
    with pytest.raises(InvalidParameterError):
        PointCloud([[0.0, 0.0, np.nan]])
    with pytest.raises(InvalidParameterError):
        PointCloud(np.zeros((3, 3)), labels=[1, 2])
    assert PointCloud(np.empty((0, 3))).is_empty


def test_point_cloud_is_read_only():
    cloud = PointCloud(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 1.0


def test_apply_transform_keeps_labels():
    cloud = PointCloud(np.eye(3), labels=[0, 1, 2])
    moved = apply_transform(cloud, RigidTransform.from_euler(0.0, 0.0, 0.0, (1.0, 0.0, 0.0)))
    np.testing.assert_array_equal(moved.labels, [0, 1, 2])
    np.testing.assert_allclose(moved.points[:, 0], [2.0, 1.0, 1.0])


def test_voxel_downsample_centroids():
    """Two points sharing a voxel collapse to their centroid; negative coords floor correctly."""
    cloud = PointCloud([[0.01, 0.01, 0.01], [0.03, 0.03, 0.03], [-0.01, 0.0, 0.0]])
    down = voxel_downsample(cloud, 0.05)
    assert down.count == 2
    # lexicographic key order puts the (-1, 0, 0) voxel first
    np.testing.assert_allclose(down.points[0], [-0.01, 0.0, 0.0])
    np.testing.assert_allclose(down.points[1], [0.02, 0.02, 0.02])


def test_voxel_downsample_of_one_voxel_is_the_centroid(rng):
    points = rng.uniform(0.0, 0.05, size=(100, 3))
    down = voxel_downsample(PointCloud(points), 0.05)
    assert down.count == 1
    np.testing.assert_allclose(down.points[0], points.mean(axis=0), atol=1e-12)


def test_voxel_downsample_is_idempotent(rng):
    cloud = PointCloud(rng.uniform(-3.0, 3.0, size=(5000, 3)), labels=rng.integers(0, 3, size=5000))
    once = voxel_downsample(cloud, 0.5)
    twice = voxel_downsample(once, 0.5)
    np.testing.assert_array_equal(twice.points, once.points)
    np.testing.assert_array_equal(twice.labels, once.labels)


def test_voxel_downsample_majority_label():
    cloud = PointCloud([[0.0, 0.0, 0.0], [0.01, 0.0, 0.0], [0.02, 0.0, 0.0], [0.03, 0.0, 0.0]],
                       labels=[2, 1, 2, 1])
    down = voxel_downsample(cloud, 0.1)
    # a 2-2 tie goes to the lower label
    np.testing.assert_array_equal(down.labels, [1])
    down = voxel_downsample(cloud.subset(np.array([0, 1, 2])), 0.1)
    np.testing.assert_array_equal(down.labels, [2])


def test_voxel_downsample_empty_and_invalid():
    assert voxel_downsample(PointCloud(np.empty((0, 3))), 0.05).is_empty
    with pytest.raises(InvalidParameterError):
        voxel_downsample(PointCloud(np.zeros((1, 3))), 0.0)


def test_radius_query_matches_brute_force(rng):
    points = rng.uniform(-1.0, 1.0, size=(500, 3))
    index = SpatialIndex(points)
    center = np.array([0.1, -0.2, 0.3])
    expected = np.flatnonzero(np.linalg.norm(points - center, axis=1) <= 0.4)
    np.testing.assert_array_equal(index.radius_query(center, 0.4), expected)


def test_nearest_query_matches_brute_force(rng):
    points = rng.uniform(-1.0, 1.0, size=(300, 3))
    index = SpatialIndex(points)
    for query in rng.uniform(-1.0, 1.0, size=(10, 3)):
        i, d = index.nearest_query(query)
        distances = np.linalg.norm(points - query, axis=1)
        assert i == int(np.argmin(distances))
        assert d == pytest.approx(distances.min())


def test_nearest_query_ties_go_to_lowest_index():
    index = SpatialIndex(np.array([[5.0, 5.0, 5.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
    i, d = index.nearest_query([0.0, 0.0, 0.0])
    assert i == 1
    assert d == pytest.approx(1.0)


def test_nearest_many_upper_bound():
    index = SpatialIndex(np.zeros((1, 3)))
    distances, indices = index.nearest_many(np.array([[0.1, 0.0, 0.0], [3.0, 0.0, 0.0]]), upper_bound=1.0)
    assert distances[0] == pytest.approx(0.1)
    assert np.isinf(distances[1])
    assert indices[1] == len(index)


def test_empty_index():
    index = SpatialIndex(np.empty((0, 3)))
    assert index.radius_query([0.0, 0.0, 0.0], 1.0).size == 0
    with pytest.raises(EmptyInputError):
        index.nearest_query([0.0, 0.0, 0.0])


def test_empty_index_nearest_many():
    index = SpatialIndex(np.empty((0, 3)))
    distances, indices = index.nearest_many(np.zeros((2, 3)))
    assert np.all(np.isinf(distances))
    np.testing.assert_array_equal(indices, [len(index), len(index)])
