"""
Registration metrics and the random-perturbation trial protocol.
"""

import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .config import ForestAlignConfig
from .errors import InvalidParameterError, NoOverlapError
from .geometry import PointCloud, RigidTransform, SpatialIndex, apply_transform
from .registration import forest_align, plain_icp

PARAMETER_NAMES = ('roll', 'pitch', 'yaw', 'tx', 'ty', 'tz')
OVERLAP_THRESHOLD = 0.25


def wrap_degrees(angles):
    """Wrap to (-180, 180]"""
    angles = np.asarray(angles, dtype=np.float64)
    return angles - 360.0 * np.ceil((angles - 180.0) / 360.0)


def param_errors(estimate: RigidTransform, truth: RigidTransform) -> np.ndarray:
    """Per-parameter difference (roll, pitch, yaw in degrees wrapped; tx, ty, tz in m)"""
    diff = estimate.to_euler6() - truth.to_euler6()
    diff[:3] = wrap_degrees(diff[:3])
    return diff


def param_rmse(estimates: Sequence[RigidTransform], truth: RigidTransform) -> np.ndarray:
    if len(estimates) == 0:
        raise InvalidParameterError("param_rmse needs at least one estimate")
    errors = np.array([param_errors(e, truth) for e in estimates])
    return np.sqrt(np.mean(errors ** 2, axis=0))


def _nearest_distances(source: PointCloud, target: PointCloud, transform: RigidTransform,
                       threshold: float) -> np.ndarray:
    if source.is_empty or target.is_empty:
        raise InvalidParameterError("metrics need nonempty clouds")
    if not threshold > 0:
        raise InvalidParameterError(f"threshold must be > 0, got {threshold}")
    index = SpatialIndex(target)
    distances, _ = index.nearest_many(transform.apply(source.points),
                                      upper_bound=np.nextafter(threshold, np.inf))
    return distances


def overlap_percent(source: PointCloud, target: PointCloud, transform: RigidTransform,
                    threshold: float = OVERLAP_THRESHOLD) -> float:
    """Percent of transformed source points with a target point within threshold"""
    distances = _nearest_distances(source, target, transform, threshold)
    return 100.0 * float(np.count_nonzero(np.isfinite(distances))) / source.count


def pair_overlap_percent(source: PointCloud, target: PointCloud, transform: RigidTransform,
                         threshold: float = OVERLAP_THRESHOLD) -> float:
    """Overlapping points of both clouds relative to the total number of points in the pair"""
    forward = _nearest_distances(source, target, transform, threshold)
    backward = _nearest_distances(target, source, transform.inverse(), threshold)
    overlapping = np.count_nonzero(np.isfinite(forward)) + np.count_nonzero(np.isfinite(backward))
    return 100.0 * float(overlapping) / (source.count + target.count)


def inlier_rmse(source: PointCloud, target: PointCloud, transform: RigidTransform,
                threshold: float = OVERLAP_THRESHOLD) -> float:
    """RMSE of nearest-neighbour distances at most `threshold` apart"""
    distances = _nearest_distances(source, target, transform, threshold)
    inliers = distances[np.isfinite(distances)]
    if inliers.size == 0:
        raise NoOverlapError(f"no source point within {threshold} m of the target",
                             last_estimate=transform)
    return float(np.sqrt(np.mean(inliers ** 2)))


@dataclass(frozen=True)
class TrialSpec:
    rot_range: float = 45.0
    trans_range: float = 15.0
    n_trials: int = 10
    seed: int = 0

    def validate(self) -> 'TrialSpec':
        if self.rot_range < 0 or self.trans_range < 0:
            raise InvalidParameterError("perturbation ranges must be >= 0")
        if self.n_trials < 1:
            raise InvalidParameterError(f"n_trials must be >= 1, got {self.n_trials}")
        return self


def perturb_transform(truth: RigidTransform, spec: TrialSpec, trial_index: int) -> RigidTransform:
    """Offset every Euler angle and translation by U(-range, +range), seeded by (seed, trial)"""
    spec.validate()
    rng = np.random.default_rng([spec.seed, trial_index])
    angle_offsets = rng.uniform(-spec.rot_range, spec.rot_range, size=3)
    translation_offsets = rng.uniform(-spec.trans_range, spec.trans_range, size=3)
    params = truth.to_euler6()
    params[:3] += angle_offsets
    params[3:] += translation_offsets
    return RigidTransform.from_euler6(params)


@dataclass(frozen=True, eq=False)
class TrialRow:
    trial: int
    initial_error: np.ndarray
    final_error: Optional[np.ndarray] = None
    rotation_error: float = float('nan')
    translation_error: float = float('nan')
    overlap_percent: float = float('nan')
    inlier_rmse: float = float('nan')
    wall_time: float = 0.0
    error: str = ''

    @property
    def failed(self) -> bool:
        return self.final_error is None


@dataclass(frozen=True, eq=False)
class TrialReport:
    rows: List[TrialRow] = field(default_factory=list)
    method: str = 'forest_align'

    @property
    def n_failed(self) -> int:
        return sum(1 for row in self.rows if row.failed)

    @property
    def rmse(self) -> np.ndarray:
        """Per-parameter RMSE over the trials that produced an estimate"""
        errors = [row.final_error for row in self.rows if not row.failed]
        if not errors:
            return np.full(len(PARAMETER_NAMES), np.nan)
        return np.sqrt(np.mean(np.square(errors), axis=0))

    @property
    def initial_rmse(self) -> np.ndarray:
        return np.sqrt(np.mean(np.square([row.initial_error for row in self.rows]), axis=0))

    def success_rate(self, rot_tol: float = 1.0, trans_tol: float = 0.1) -> float:
        """Share of trials ending within rot_tol degrees and trans_tol meters of the truth"""
        if not self.rows:
            return 0.0
        ok = sum(1 for row in self.rows if not row.failed
                 and row.rotation_error < rot_tol and row.translation_error < trans_tol)
        return ok / len(self.rows)

    def rmse_dict(self) -> Dict[str, float]:
        return dict(zip(PARAMETER_NAMES, (float(v) for v in self.rmse)))


Aligner = Callable[[PointCloud, PointCloud, ForestAlignConfig], RigidTransform]


def forest_align_estimate(source: PointCloud, target: PointCloud,
                          cfg: ForestAlignConfig) -> RigidTransform:
    return forest_align(source, target, cfg).final


def plain_icp_estimate(source: PointCloud, target: PointCloud,
                       cfg: ForestAlignConfig) -> RigidTransform:
    return plain_icp(source, target, cfg).transform


ALIGNERS: Dict[str, Aligner] = {
    'forest_align': forest_align_estimate,
    'plain_icp': plain_icp_estimate,
}


def _run_trial(source: PointCloud, target: PointCloud, truth: RigidTransform, spec: TrialSpec,
               cfg: ForestAlignConfig, trial: int, aligner: Aligner) -> TrialRow:
    start = time.perf_counter()
    initial = perturb_transform(truth, spec, trial)
    initial_error = param_errors(initial, truth)
    try:
        # the aligner only ever sees the perturbed source, starting from identity
        moved = apply_transform(source, initial)
        estimate = aligner(moved, target, cfg.with_seed(spec.seed + trial)).compose(initial)
        residual = estimate.compose(truth.inverse())
        return TrialRow(
            trial=trial,
            initial_error=initial_error,
            final_error=param_errors(estimate, truth),
            rotation_error=residual.rotation_angle(),
            translation_error=float(np.linalg.norm(estimate.translation - truth.translation)),
            overlap_percent=overlap_percent(source, target, estimate, cfg.icp.max_corr_dist),
            inlier_rmse=inlier_rmse(source, target, estimate, cfg.icp.max_corr_dist),
            wall_time=time.perf_counter() - start,
        )
    except Exception as e:
        logging.error(f"trial {trial} failed: {e}")
        return TrialRow(trial=trial, initial_error=initial_error,
                        wall_time=time.perf_counter() - start, error=str(e))


def run_trials(source: PointCloud, target: PointCloud, truth: RigidTransform, spec: TrialSpec,
               cfg: Optional[ForestAlignConfig] = None, method: str = 'forest_align',
               workers: int = 1) -> TrialReport:
    """
    Perturb the truth, align, record errors; repeated spec.n_trials times.
    Trials are independent; the report is assembled in trial order whatever
    the number of workers.
    """
    spec.validate()
    cfg = (cfg or ForestAlignConfig()).validate()
    if method not in ALIGNERS:
        raise InvalidParameterError(f"unknown method {method!r}, expected one of {sorted(ALIGNERS)}")
    aligner = ALIGNERS[method]

    def one(trial: int) -> TrialRow:
        row = _run_trial(source, target, truth, spec, cfg, trial, aligner)
        logging.info(f"{method} trial {trial + 1}/{spec.n_trials}: "
                     f"{'FAILED' if row.failed else 'ok'} in {row.wall_time:.1f} s")
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(spec.n_trials)))
    else:
        rows = [one(trial) for trial in range(spec.n_trials)]
    report = TrialReport(rows, method)
    logging.info(f"{method}: {report.n_failed}/{spec.n_trials} failed, RMSE {report.rmse_dict()}")
    return report


def compare_methods(source: PointCloud, target: PointCloud, truth: RigidTransform,
                    spec: TrialSpec, cfg: Optional[ForestAlignConfig] = None) -> Dict[str, TrialReport]:
    """Same perturbations for the incremental pipeline and the plain ICP baseline"""
    return {method: run_trials(source, target, truth, spec, cfg, method=method)
            for method in ALIGNERS}
