"""
Point-cloud container, rigid-body transforms, voxel-grid downsampling and the
kd-tree spatial index every later stage queries.

Euler convention (used everywhere, RMSE reporting included):
R = R_z(yaw) . R_y(pitch) . R_x(roll), intrinsic axes, angles in degrees.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .config import worker_count
from .errors import EmptyInputError, InvalidParameterError

EULER_SEQUENCE = 'ZYX'


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N x 3 coordinates in meters plus optional per-point integer labels"""

    points: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, copy=True)
        if points.size == 0:
            points = points.reshape(0, 3)
        if points.ndim != 2 or points.shape[1] != 3:
            raise InvalidParameterError(f"points must be N x 3, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise InvalidParameterError("point coordinates must be finite")
        object.__setattr__(self, 'points', _frozen(points))

        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
            if len(labels) != len(points):
                raise InvalidParameterError(
                    f"labels length {len(labels)} does not match {len(points)} points")
            object.__setattr__(self, 'labels', _frozen(labels))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    def subset(self, selector) -> 'PointCloud':
        """Points picked by a boolean mask or an index array (labels follow)"""
        labels = None if self.labels is None else self.labels[selector]
        return PointCloud(self.points[selector], labels)

    def with_labels(self, labels: Optional[np.ndarray]) -> 'PointCloud':
        return PointCloud(self.points, labels)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.is_empty:
            raise EmptyInputError("bounds of an empty cloud")
        return self.points.min(axis=0), self.points.max(axis=0)


def euler_to_rotation(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """3x3 rotation for (roll, pitch, yaw) in degrees"""
    return Rotation.from_euler(EULER_SEQUENCE, [yaw, pitch, roll], degrees=True).as_matrix()


def rotation_to_euler(rotation: np.ndarray) -> Tuple[float, float, float]:
    """(roll, pitch, yaw) in degrees; inverse of euler_to_rotation away from |pitch| = 90"""
    yaw, pitch, roll = Rotation.from_matrix(rotation).as_euler(EULER_SEQUENCE, degrees=True)
    return float(roll), float(pitch), float(yaw)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> R x + t"""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64, copy=True).reshape(3, 3)
        translation = np.array(self.translation, dtype=np.float64, copy=True).reshape(3)
        object.__setattr__(self, 'rotation', _frozen(rotation))
        object.__setattr__(self, 'translation', _frozen(translation))

    @classmethod
    def identity(cls) -> 'RigidTransform':
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_euler(cls, roll: float, pitch: float, yaw: float,
                   translation: Sequence[float] = (0.0, 0.0, 0.0)) -> 'RigidTransform':
        return cls(euler_to_rotation(roll, pitch, yaw), translation)

    @classmethod
    def from_euler6(cls, params: Sequence[float]) -> 'RigidTransform':
        """(roll, pitch, yaw, tx, ty, tz)"""
        roll, pitch, yaw, tx, ty, tz = (float(v) for v in params)
        return cls.from_euler(roll, pitch, yaw, (tx, ty, tz))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> 'RigidTransform':
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (4, 4):
            raise InvalidParameterError(f"homogeneous matrix must be 4 x 4, got {matrix.shape}")
        return cls(matrix[:3, :3], matrix[:3, 3])

    @property
    def euler(self) -> Tuple[float, float, float]:
        return rotation_to_euler(self.rotation)

    def to_euler6(self) -> np.ndarray:
        return np.concatenate([self.euler, self.translation])

    @property
    def matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, other: 'RigidTransform') -> 'RigidTransform':
        """self applied after other"""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> 'RigidTransform':
        rotation_t = self.rotation.T
        return RigidTransform(rotation_t, -rotation_t @ self.translation)

    def is_proper(self, tol: float = 1e-9) -> bool:
        """R^T R = I and det R = +1 within tol"""
        gram = self.rotation.T @ self.rotation
        return bool(np.all(np.abs(gram - np.eye(3)) <= tol)
                    and abs(np.linalg.det(self.rotation) - 1.0) <= tol)

    def rotation_angle(self) -> float:
        """Geodesic rotation angle in degrees"""
        cos_angle = np.clip((np.trace(self.rotation) - 1.0) / 2.0, -1.0, 1.0)
        return float(np.degrees(np.arccos(cos_angle)))


def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    return PointCloud(transform.apply(cloud.points), cloud.labels)


def compose(first: RigidTransform, second: RigidTransform) -> RigidTransform:
    """first applied after second"""
    return first.compose(second)


def invert(transform: RigidTransform) -> RigidTransform:
    return transform.inverse()


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """
    One point per occupied voxel of edge `voxel`, placed at the centroid of the
    voxel's points. Voxels are keyed by floor(coordinate / voxel) on the native
    coordinates and emitted in lexicographic key order. Labels, when present,
    become the voxel's majority label (ties go to the lowest label).
    """
    if not voxel > 0:
        raise InvalidParameterError(f"voxel size must be > 0, got {voxel}")
    if cloud.is_empty:
        return PointCloud(np.empty((0, 3)), None if cloud.labels is None else np.empty(0, np.int64))

    keys = np.floor(cloud.points / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    n_voxels = counts.shape[0]

    centroids = np.empty((n_voxels, 3))
    for axis in range(3):
        centroids[:, axis] = np.bincount(inverse, weights=cloud.points[:, axis],
                                         minlength=n_voxels) / counts

    labels = None
    if cloud.labels is not None:
        values, label_index = np.unique(cloud.labels, return_inverse=True)
        votes = np.zeros((n_voxels, values.shape[0]), dtype=np.int64)
        np.add.at(votes, (inverse, label_index.reshape(-1)), 1)
        labels = values[np.argmax(votes, axis=1)]

    logging.debug(f"voxel_downsample: {cloud.count} -> {n_voxels} points at {voxel} m")
    return PointCloud(centroids, labels)


class SpatialIndex:
    """Read-only kd-tree over a cloud; queries are safe from many threads"""

    def __init__(self, cloud, workers: Optional[int] = None):
        if isinstance(cloud, PointCloud):
            points = cloud.points
        else:
            points = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
        self.points = points
        self.workers = worker_count(workers)
        self._tree = cKDTree(points) if len(points) else None

    def __len__(self) -> int:
        return self.points.shape[0]

    def radius_query(self, center: Sequence[float], radius: float) -> np.ndarray:
        """Sorted indices of every point with ||x_i - center|| <= radius"""
        if not radius > 0:
            raise InvalidParameterError(f"radius must be > 0, got {radius}")
        if self._tree is None:
            return np.empty(0, dtype=np.int64)
        found = self._tree.query_ball_point(np.asarray(center, dtype=np.float64), radius,
                                            return_sorted=True)
        return np.asarray(found, dtype=np.int64)

    def radius_query_many(self, centers: np.ndarray, radius: float):
        """One index list per center (object array, as scipy returns it)"""
        if not radius > 0:
            raise InvalidParameterError(f"radius must be > 0, got {radius}")
        if self._tree is None:
            return [np.empty(0, dtype=np.int64) for _ in range(len(centers))]
        return self._tree.query_ball_point(centers, radius, workers=self.workers)

    def nearest_query(self, point: Sequence[float]) -> Tuple[int, float]:
        """Global nearest neighbour; equal distances resolve to the lowest index"""
        if self._tree is None:
            raise EmptyInputError("nearest_query on an empty cloud")
        point = np.asarray(point, dtype=np.float64)
        distance, _ = self._tree.query(point, k=1)
        # re-collect every candidate at that distance to make tie-breaking explicit
        candidates = np.asarray(
            self._tree.query_ball_point(point, distance * (1 + 1e-9) + 1e-12), dtype=np.int64)
        if candidates.size == 0:
            candidates = np.arange(len(self.points))
        dists = np.linalg.norm(self.points[candidates] - point, axis=1)
        best = candidates[dists == dists.min()].min()
        return int(best), float(np.linalg.norm(self.points[best] - point))

    def nearest_many(self, points: np.ndarray,
                     upper_bound: float = np.inf) -> Tuple[np.ndarray, np.ndarray]:
        """
        Vectorised nearest query. Points with no neighbour within upper_bound
        get distance inf and index len(self).
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if self._tree is None:
            return np.full(len(points), np.inf), np.full(len(points), len(self), dtype=np.int64)
        distances, indices = self._tree.query(points, k=1, distance_upper_bound=upper_bound,
                                              workers=self.workers)
        return distances, indices.astype(np.int64)
