"""
Point-to-point ICP and the incremental structural-complexity pipeline.

forest_align runs, in order: coarse voxel downsampling, normal estimation,
vMF grouping, complexity scoring, level matching, a coarse capture (levelling
plus a heading and shift search, see capture.py), one coarse-to-fine ICP per
matched level on the cumulative union of levels seen so far, and a final ICP
on the full clouds downsampled at the refine voxel size.
"""

import time
import logging
from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .capture import Capture, capture
from .config import ForestAlignConfig, IcpConfig
from .errors import (DegenerateCorrespondencesError, EmptyInputError, ForestAlignError,
                     NoOverlapError)
from .geometry import PointCloud, RigidTransform, SpatialIndex, voxel_downsample
from .matching import GroupAssignment, match_groups
from .normals import NormalField, estimate_normals
from .vmf import ComplexityProfile, VmfMixture, fit_vmf_mixture, structural_complexity

MIN_CORRESPONDENCES = 3
RANK_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class IcpResult:
    transform: RigidTransform
    inlier_rmse: float
    iterations: int
    converged: bool
    n_inliers: int
    n_source: int
    rmse_history: Tuple[float, ...] = ()
    # mean of min(d^2, max_corr_dist^2) over every source point, one per pass
    objective_history: Tuple[float, ...] = ()

    @property
    def fitness(self) -> float:
        return self.n_inliers / self.n_source if self.n_source else 0.0


@dataclass(frozen=True, eq=False)
class LevelAlignment:
    stage: str
    source_level: Optional[int]
    target_level: Optional[int]
    transform: RigidTransform
    inlier_rmse: float
    iterations: int
    n_source: int
    n_target: int


@dataclass(frozen=True, eq=False)
class GroupedCloud:
    cloud: PointCloud
    normals: NormalField
    mixture: VmfMixture
    profile: ComplexityProfile


@dataclass(frozen=True, eq=False)
class Diagnostics:
    overlap_percent: float
    inlier_rmse: float
    iterations: Dict[str, int]
    wall_time: float
    assignment: GroupAssignment
    source_profile: ComplexityProfile
    target_profile: ComplexityProfile
    source_kappas: Tuple[float, ...]
    target_kappas: Tuple[float, ...]
    capture: Optional[Capture] = None


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    final: RigidTransform
    per_level: Tuple[LevelAlignment, ...]
    converged: bool
    diagnostics: Diagnostics


def estimate_rigid_svd(source_pts: np.ndarray, target_pts: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping source_pts onto target_pts (Kabsch)"""
    source_pts = np.asarray(source_pts, dtype=np.float64).reshape(-1, 3)
    target_pts = np.asarray(target_pts, dtype=np.float64).reshape(-1, 3)
    if len(source_pts) != len(target_pts):
        raise DegenerateCorrespondencesError(
            f"{len(source_pts)} source points vs {len(target_pts)} target points")
    if len(source_pts) < MIN_CORRESPONDENCES:
        raise DegenerateCorrespondencesError(
            f"need at least {MIN_CORRESPONDENCES} correspondences, got {len(source_pts)}")

    source_centroid = source_pts.mean(axis=0)
    target_centroid = target_pts.mean(axis=0)
    source_centered = source_pts - source_centroid
    target_centered = target_pts - target_centroid
    cross = source_centered.T @ target_centered

    U, S, Vt = np.linalg.svd(cross)
    if S[0] <= 0 or S[1] <= RANK_TOLERANCE * S[0]:
        raise DegenerateCorrespondencesError("correspondences are collinear or coincident")
    reflection = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    D = np.diag([1.0, 1.0, reflection])
    rotation = Vt.T @ D @ U.T
    translation = target_centroid - rotation @ source_centroid
    return RigidTransform(rotation, translation)


def _as_points(cloud: Union[PointCloud, np.ndarray]) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def icp(source: Union[PointCloud, np.ndarray], target_index: SpatialIndex,
        init: Optional[RigidTransform], cfg: IcpConfig) -> IcpResult:
    """
    Classic point-to-point ICP. Each pass pairs every moved source point with
    its nearest target point within cfg.max_corr_dist and re-solves the rigid
    transform; stops when the inlier RMSE changes by less than
    cfg.rel_tolerance (relative) or after cfg.max_iterations passes.
    """
    cfg.validate()
    src = _as_points(source)
    if len(src) == 0 or len(target_index) == 0:
        raise EmptyInputError("ICP needs nonempty source and target clouds")
    target_pts = target_index.points
    transform = init or RigidTransform.identity()
    # cKDTree's upper bound is strict; nudge it so "within" means <=
    bound = np.nextafter(cfg.max_corr_dist, np.inf)
    truncation = cfg.max_corr_dist ** 2

    rmse_history: List[float] = []
    objective_history: List[float] = []
    converged = False
    iterations = 0
    n_inliers = 0

    def correspondences(current: RigidTransform):
        moved = current.apply(src)
        distances, indices = target_index.nearest_many(moved, upper_bound=bound)
        inliers = np.isfinite(distances)
        if not np.any(inliers):
            raise NoOverlapError(
                f"no target point within {cfg.max_corr_dist} m of any source point",
                last_estimate=current)
        squared = distances[inliers] ** 2
        rmse = float(np.sqrt(squared.mean()))
        objective = float((squared.sum() + (len(src) - squared.size) * truncation) / len(src))
        return moved, indices, inliers, rmse, objective

    while True:
        moved, indices, inliers, rmse, objective = correspondences(transform)
        n_inliers = int(np.count_nonzero(inliers))
        previous = rmse_history[-1] if rmse_history else None
        rmse_history.append(rmse)
        objective_history.append(objective)
        logging.debug(f"ICP pass {len(rmse_history)}: inlier RMSE {rmse:.6f} m, "
                      f"{n_inliers}/{len(src)} inliers")
        if rmse <= 1e-15 or (previous is not None
                             and abs(previous - rmse) <= cfg.rel_tolerance * previous):
            converged = True
            break
        if iterations >= cfg.max_iterations:
            break
        delta = estimate_rigid_svd(moved[inliers], target_pts[indices[inliers]])
        transform = delta.compose(transform)
        iterations += 1

    return IcpResult(transform, rmse_history[-1], max(iterations, 1), converged, n_inliers,
                     len(src), tuple(rmse_history), tuple(objective_history))


@contextmanager
def _stage(name: str):
    """Tag library errors escaping this block with the pipeline stage"""
    try:
        yield
    except ForestAlignError as e:
        if e.stage is None:
            e.stage = name
        raise


def level_icp(source: Union[PointCloud, np.ndarray], target_index: SpatialIndex,
              init: Optional[RigidTransform], cfg: ForestAlignConfig) -> IcpResult:
    """One level stage: ICP at each of cfg.level_distances(), coarse to fine"""
    transform, iterations, result = init, 0, None
    for distance in cfg.level_distances():
        result = icp(source, target_index, transform, replace(cfg.level_icp(), max_corr_dist=distance))
        transform = result.transform
        iterations += result.iterations
    return replace(result, iterations=iterations)


def group_cloud(cloud: PointCloud, k: int, cfg: ForestAlignConfig, seed: int) -> GroupedCloud:
    """Downsample at the coarse voxel, estimate normals, fit the mixture, score levels"""
    with _stage('downsample'):
        coarse = voxel_downsample(cloud, cfg.voxel)
    with _stage('normals'):
        normals = estimate_normals(coarse, cfg.radius)
    with _stage('grouping'):
        mixture = fit_vmf_mixture(normals, k, seed, n_init=cfg.n_init)
    with _stage('complexity'):
        profile = structural_complexity(normals, mixture)
    return GroupedCloud(coarse, normals, mixture, profile)


def forest_align(source: PointCloud, target: PointCloud,
                 cfg: Optional[ForestAlignConfig] = None) -> RegistrationResult:
    """Estimate the rigid transform taking `source` into `target`'s frame"""
    cfg = (cfg or ForestAlignConfig()).validate()
    if source.is_empty or target.is_empty:
        raise EmptyInputError("forest_align needs two nonempty clouds", stage='input')
    started = time.perf_counter()
    logging.info(f"forest_align: {source.count} source / {target.count} target points, "
                 f"K={cfg.k_source}/{cfg.k_target}, seed={cfg.seed}")

    grouped_source = group_cloud(source, cfg.k_source, cfg, cfg.seed)
    grouped_target = group_cloud(target, cfg.k_target, cfg, cfg.seed)
    with _stage('matching'):
        assignment = match_groups(grouped_source.profile, grouped_target.profile)

    source_labels = grouped_source.mixture.labels
    target_labels = grouped_target.mixture.labels
    transform = RigidTransform.identity()
    captured: Optional[Capture] = None
    per_level: List[LevelAlignment] = []
    iterations: Dict[str, int] = {}
    used_source: List[int] = []
    used_target: List[int] = []

    for source_level, target_level in assignment.matched_levels():
        used_source.append(source_level)
        used_target.append(target_level)
        stage = f"level-{source_level}"
        source_points = grouped_source.cloud.points[np.isin(source_labels, used_source)]
        target_points = grouped_target.cloud.points[np.isin(target_labels, used_target)]
        with _stage(stage):
            if cfg.capture and captured is None:
                captured = capture(grouped_source.cloud, grouped_target.cloud,
                                   grouped_source.mixture.mus[source_level - 1],
                                   grouped_target.mixture.mus[target_level - 1], cfg)
                transform = captured.transform
            result = level_icp(source_points, SpatialIndex(target_points), transform, cfg)
        transform = result.transform
        iterations[stage] = result.iterations
        per_level.append(LevelAlignment(stage, source_level, target_level, transform,
                                        result.inlier_rmse, result.iterations,
                                        len(source_points), len(target_points)))
        logging.info(f"{stage} -> target {target_level}: inlier RMSE {result.inlier_rmse:.4f} m "
                     f"after {result.iterations} iterations")

    with _stage('refine'):
        fine_source = voxel_downsample(source, cfg.refine_voxel)
        fine_target = voxel_downsample(target, cfg.refine_voxel)
        final = icp(fine_source, SpatialIndex(fine_target), transform, cfg.refine_icp())
    iterations['refine'] = final.iterations
    per_level.append(LevelAlignment('refine', None, None, final.transform, final.inlier_rmse,
                                    final.iterations, fine_source.count, fine_target.count))
    if not final.converged:
        logging.warning(f"refine stage hit its {cfg.refine_icp().max_iterations}-iteration cap")

    wall_time = time.perf_counter() - started
    diagnostics = Diagnostics(
        overlap_percent=100.0 * final.fitness,
        inlier_rmse=final.inlier_rmse,
        iterations=iterations,
        wall_time=wall_time,
        assignment=assignment,
        source_profile=grouped_source.profile,
        target_profile=grouped_target.profile,
        source_kappas=tuple(grouped_source.mixture.kappas.tolist()),
        target_kappas=tuple(grouped_target.mixture.kappas.tolist()),
        capture=captured,
    )
    logging.info(f"forest_align done in {wall_time:.2f} s: inlier RMSE {final.inlier_rmse:.4f} m, "
                 f"overlap {diagnostics.overlap_percent:.1f}%")
    return RegistrationResult(final.transform, tuple(per_level), final.converged, diagnostics)


def plain_icp(source: PointCloud, target: PointCloud, cfg: Optional[ForestAlignConfig] = None,
              init: Optional[RigidTransform] = None) -> IcpResult:
    """Baseline: one ICP over the whole refine-voxel clouds, no grouping"""
    cfg = (cfg or ForestAlignConfig()).validate()
    fine_source = voxel_downsample(source, cfg.refine_voxel)
    fine_target = voxel_downsample(target, cfg.refine_voxel)
    return icp(fine_source, SpatialIndex(fine_target), init, cfg.refine_icp())


def register_to_reference(clouds: Sequence[PointCloud], reference: int,
                          cfg: Optional[ForestAlignConfig] = None) -> Dict[int, RegistrationResult]:
    """
    Multi-scan alignment done pairwise: every scan against the reference
    (centre) scan. Scans that fail are logged and left out of the result.
    """
    results: Dict[int, RegistrationResult] = {}
    for i, cloud in enumerate(clouds):
        if i == reference:
            continue
        try:
            results[i] = forest_align(cloud, clouds[reference], cfg)
        except ForestAlignError as e:
            logging.error(f"scan {i} -> reference {reference} failed: {e}")
    return results
