"""
Per-point plane approximation: eigen-decomposition of the covariance of each
point's spherical neighbourhood, smallest-eigenvalue eigenvector as normal.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateNeighborhoodError, InvalidParameterError
from .geometry import PointCloud, SpatialIndex

MIN_NEIGHBORS = 3
# second-smallest eigenvalue below this means a rank-1 (collinear) neighbourhood
COLLINEAR_EIGENVALUE = 1e-10
SIGN_EPS = 1e-12
CHUNK_SIZE = 20000


@dataclass(frozen=True, eq=False)
class NormalField:
    normals: np.ndarray
    valid: np.ndarray

    def __len__(self) -> int:
        return self.normals.shape[0]

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.valid))

    @property
    def valid_normals(self) -> np.ndarray:
        return self.normals[self.valid]


@dataclass(frozen=True, eq=False)
class NeighborhoodEigen:
    covariance: np.ndarray
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns, orthonormal

    @property
    def degenerate(self) -> bool:
        return bool(self.eigenvalues[1] < COLLINEAR_EIGENVALUE)

    @property
    def normal(self) -> np.ndarray:
        return canonicalize_signs(self.eigenvectors[:, 0][None, :])[0]


def canonicalize_signs(normals: np.ndarray) -> np.ndarray:
    """Flip each normal into the z >= 0 hemisphere (y, then x, break |z| ~ 0)"""
    normals = np.array(normals, dtype=np.float64, copy=True)
    x, y, z = normals[:, 0], normals[:, 1], normals[:, 2]
    flip = np.where(np.abs(z) >= SIGN_EPS, z < 0,
                    np.where(np.abs(y) >= SIGN_EPS, y < 0, x < 0))
    normals[flip] *= -1.0
    return normals


def neighborhood_covariance(points: np.ndarray) -> NeighborhoodEigen:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) < MIN_NEIGHBORS:
        raise DegenerateNeighborhoodError(
            f"need at least {MIN_NEIGHBORS} points for a plane, got {len(points)}")
    centered = points - points.mean(axis=0)
    covariance = centered.T @ centered / len(points)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    return NeighborhoodEigen(covariance, eigenvalues, eigenvectors)


def _chunk_normals(points: np.ndarray, lists, start: int, stop: int):
    """Batched covariance + eigh for points[start:stop] from their neighbour lists"""
    counts = np.fromiter((len(n) for n in lists), dtype=np.int64, count=stop - start)
    normals = np.zeros((stop - start, 3))
    valid = counts >= MIN_NEIGHBORS
    if not np.any(valid) or counts.sum() == 0:
        return normals, np.zeros(stop - start, dtype=bool)

    flat = np.concatenate([np.asarray(n, dtype=np.int64) for n in lists])
    owner = np.repeat(np.arange(stop - start), counts)
    # centre on the query point so sums stay small whatever the scene offset
    local = points[flat] - points[start + owner]

    n_local = stop - start
    safe_counts = np.maximum(counts, 1).astype(np.float64)
    first = np.stack([np.bincount(owner, weights=local[:, a], minlength=n_local)
                      for a in range(3)], axis=1) / safe_counts[:, None]
    second = np.empty((n_local, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            moment = np.bincount(owner, weights=local[:, a] * local[:, b],
                                 minlength=n_local) / safe_counts
            second[:, a, b] = moment
            second[:, b, a] = moment
    covariance = second - first[:, :, None] * first[:, None, :]

    eigenvalues, eigenvectors = np.linalg.eigh(covariance[valid])
    ok = eigenvalues[:, 1] >= COLLINEAR_EIGENVALUE
    chunk_normals = canonicalize_signs(eigenvectors[:, :, 0])
    chunk_normals /= np.linalg.norm(chunk_normals, axis=1, keepdims=True)

    valid_index = np.flatnonzero(valid)
    normals[valid_index[ok]] = chunk_normals[ok]
    valid[valid_index[~ok]] = False
    return normals, valid


def estimate_normals(cloud: PointCloud, radius: float,
                     index: Optional[SpatialIndex] = None) -> NormalField:
    """
    Unit normal at every point from its neighbours within `radius` (the point
    itself included). Fewer than 3 neighbours or a collinear neighbourhood
    leaves the point invalid.
    """
    if not radius > 0:
        raise InvalidParameterError(f"normal radius must be > 0, got {radius}")
    n_points = cloud.count
    normals = np.zeros((n_points, 3))
    valid = np.zeros(n_points, dtype=bool)
    if n_points == 0:
        return NormalField(normals, valid)

    index = index or SpatialIndex(cloud)
    points = cloud.points
    for start in range(0, n_points, CHUNK_SIZE):
        stop = min(start + CHUNK_SIZE, n_points)
        neighbors = index.radius_query_many(points[start:stop], radius)
        normals[start:stop], valid[start:stop] = _chunk_normals(points, neighbors, start, stop)

    logging.info(f"estimate_normals: {int(valid.sum())}/{n_points} valid at r={radius} m")
    normals.setflags(write=False)
    valid.setflags(write=False)
    return NormalField(normals, valid)
