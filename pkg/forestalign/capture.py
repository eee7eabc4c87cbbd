"""
Coarse capture ahead of the level stages.

The source is first levelled by turning its level-1 mean direction onto the
target's. Heading and horizontal shift are then searched together: for every
heading on a grid both clouds are rasterised into height cells, and every
integer cell shift inside the capture window is scored at once with FFT
cross-correlations. A cell whose vertical extent exceeds CANOPY_MIN counts as
vegetation. The score counts vegetation landing on vegetation, charges
vegetation landing on open ground, and settles what remains (treeless plots,
ties) on how well the lowest heights agree.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.signal import correlate
from scipy.spatial.transform import Rotation

from .config import ForestAlignConfig
from .errors import NoOverlapError
from .geometry import PointCloud, RigidTransform, voxel_downsample

CAPTURE_CELL = 1.0
CAPTURE_THIN = 0.5
CANOPY_MIN = 2.0
# terrain disagreement (m) charged for each source cell left uncovered
GROUND_TAU = 0.25
MIN_OVERLAP_CELLS = 10
MAX_LEVELLING = 75.0
SCORE_DECIMALS = 9


@dataclass(frozen=True, eq=False)
class Capture:
    transform: RigidTransform
    tilt: float
    yaw: float
    shift: Tuple[float, float, float]
    score: float
    overlap_cells: int


@dataclass(frozen=True, eq=False)
class HeightRaster:
    """Occupancy, lowest height and vegetation flag per CAPTURE_CELL cell"""
    origin: np.ndarray  # lattice index of cell [0, 0]
    occupied: np.ndarray
    low: np.ndarray  # 0 where empty
    canopy: np.ndarray

    @property
    def open(self) -> np.ndarray:
        return self.occupied - self.canopy

    @property
    def cells(self) -> int:
        return int(self.occupied.sum())


@dataclass(frozen=True)
class ShiftScore:
    score: float
    cells: Tuple[int, int]
    dz: float
    overlap_cells: int


def minimal_rotation(a, b) -> np.ndarray:
    """Smallest rotation taking direction a onto direction b"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    axis = np.cross(a, b)
    sine = float(np.linalg.norm(axis))
    cosine = float(np.dot(a, b))
    if sine < 1e-12:
        if cosine > 0:
            return np.eye(3)
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        return Rotation.from_rotvec(np.pi * axis / np.linalg.norm(axis)).as_matrix()
    return Rotation.from_rotvec(axis / sine * np.arctan2(sine, cosine)).as_matrix()


def about_pivot(rotation: np.ndarray, pivot: np.ndarray) -> RigidTransform:
    return RigidTransform(rotation, pivot - rotation @ pivot)


def horizontal_frame(up) -> np.ndarray:
    """Rows e1, e2, up of a right-handed frame"""
    up = np.asarray(up, dtype=np.float64)
    up = up / np.linalg.norm(up)
    helper = np.array([1.0, 0.0, 0.0]) if abs(up[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - np.dot(helper, up) * up
    e1 /= np.linalg.norm(e1)
    return np.stack([e1, np.cross(up, e1), up])


def rasterize(uvh: np.ndarray, cell: float = CAPTURE_CELL) -> HeightRaster:
    """Rasterise (u, v, height) rows on the lattice floor(u / cell), floor(v / cell)"""
    index = np.floor(uvh[:, :2] / cell).astype(np.int64)
    origin = index.min(axis=0)
    index -= origin
    shape = tuple(int(n) for n in index.max(axis=0) + 1)
    flat = np.ravel_multi_index((index[:, 0], index[:, 1]), shape)
    low = np.full(shape[0] * shape[1], np.inf)
    high = np.full(shape[0] * shape[1], -np.inf)
    np.minimum.at(low, flat, uvh[:, 2])
    np.maximum.at(high, flat, uvh[:, 2])
    occupied = np.isfinite(low)
    canopy = occupied & (high - low > CANOPY_MIN)
    return HeightRaster(origin,
                        occupied.reshape(shape).astype(np.float64),
                        np.where(occupied, low, 0.0).reshape(shape),
                        canopy.reshape(shape).astype(np.float64))


def _xcorr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return correlate(a, b, mode='full', method='fft')


def best_shift(target: HeightRaster, source: HeightRaster, limit: int) -> Optional[ShiftScore]:
    """
    Best integer shift (a, b), |a|, |b| <= limit cells, of `source` over
    `target`. Ties go to the shortest shift. None when no shift overlaps
    MIN_OVERLAP_CELLS cells.
    """
    overlap = np.rint(_xcorr(target.occupied, source.occupied))
    agreement = np.rint(_xcorr(target.canopy, source.canopy)
                        - _xcorr(target.open, source.canopy)
                        - _xcorr(target.canopy, source.open))
    sum_dh = _xcorr(target.low, source.occupied) - _xcorr(target.occupied, source.low)
    sum_dh2 = (_xcorr(target.low ** 2, source.occupied) + _xcorr(target.occupied, source.low ** 2)
               - 2.0 * _xcorr(target.low, source.low))

    # full-mode entry k lines source cell i up with target cell i + k - (rows - 1)
    rows, cols = source.occupied.shape
    a = np.arange(overlap.shape[0]) - (rows - 1) - (source.origin[0] - target.origin[0])
    b = np.arange(overlap.shape[1]) - (cols - 1) - (source.origin[1] - target.origin[1])
    a, b = np.meshgrid(a, b, indexing='ij')
    valid = (overlap >= MIN_OVERLAP_CELLS) & (np.abs(a) <= limit) & (np.abs(b) <= limit)
    if not np.any(valid):
        return None

    n_source = source.cells
    covered = np.maximum(overlap, 1.0)
    spread = np.maximum(sum_dh2 - sum_dh ** 2 / covered, 0.0)
    terrain = (spread + GROUND_TAU ** 2 * (n_source - overlap)) / n_source
    score = np.round(np.where(valid, agreement - terrain, -np.inf), SCORE_DECIMALS)
    ties = np.flatnonzero(score == score.max())
    pick = ties[np.argmin(a.flat[ties] ** 2 + b.flat[ties] ** 2)]
    return ShiftScore(float(score.flat[pick]), (int(a.flat[pick]), int(b.flat[pick])),
                      float(sum_dh.flat[pick] / covered.flat[pick]), int(overlap.flat[pick]))


def headings(cfg: ForestAlignConfig):
    """Searched yaw angles, nearest to zero first"""
    steps = int(np.floor(cfg.capture_yaw / cfg.capture_yaw_step + 1e-9))
    return sorted((cfg.capture_yaw_step * i for i in range(-steps, steps + 1)),
                  key=lambda yaw: (abs(yaw), yaw))


def capture(source: PointCloud, target: PointCloud, source_up, target_up,
            cfg: ForestAlignConfig) -> Capture:
    """
    Coarse transform bringing `source` within reach of the level stages.
    `source_up` and `target_up` are the mean directions of the matched
    level-1 groups. Raises NoOverlapError when no placement inside the
    capture window overlaps the target.
    """
    thin_source = voxel_downsample(source, CAPTURE_THIN).points
    thin_target = voxel_downsample(target, CAPTURE_THIN).points
    pivot = thin_source.mean(axis=0)

    tilt = minimal_rotation(source_up, target_up)
    tilt_angle = RigidTransform(tilt, np.zeros(3)).rotation_angle()
    if tilt_angle > MAX_LEVELLING:
        logging.warning(f"capture: level-1 directions {tilt_angle:.1f}° apart, skipping levelling")
        tilt, tilt_angle = np.eye(3), 0.0
    levelled = about_pivot(tilt, pivot)
    moved = levelled.apply(thin_source)

    frame = horizontal_frame(target_up)
    origin = thin_target.mean(axis=0)
    target_raster = rasterize((thin_target - origin) @ frame.T)
    limit = int(np.floor(cfg.capture_shift / CAPTURE_CELL))

    best: Optional[ShiftScore] = None
    best_yaw = 0.0
    for yaw in headings(cfg):
        turn = about_pivot(Rotation.from_rotvec(np.radians(yaw) * frame[2]).as_matrix(), pivot)
        found = best_shift(target_raster, rasterize((turn.apply(moved) - origin) @ frame.T), limit)
        if found is not None and (best is None or found.score > best.score):
            best, best_yaw = found, yaw
    if best is None:
        raise NoOverlapError(f"no placement within {cfg.capture_shift:g} m and {cfg.capture_yaw:g}° "
                             f"overlaps the target", last_estimate=RigidTransform.identity())

    turn = about_pivot(Rotation.from_rotvec(np.radians(best_yaw) * frame[2]).as_matrix(), pivot)
    a, b = best.cells
    shift = CAPTURE_CELL * (a * frame[0] + b * frame[1]) + best.dz * frame[2]
    transform = RigidTransform(np.eye(3), shift).compose(turn).compose(levelled)
    logging.info(f"capture: tilt {tilt_angle:.1f}°, yaw {best_yaw:+.1f}°, shift "
                 f"({shift[0]:.1f}, {shift[1]:.1f}, {shift[2]:.2f}) m over {best.overlap_cells} cells")
    return Capture(transform, tilt_angle, best_yaw, tuple(float(v) for v in shift), best.score,
                   best.overlap_cells)
