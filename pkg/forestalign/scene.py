"""
Synthetic forest scenes with ground-truth labels, and the view cutting used to
turn one scene into a registration pair (TLS-like, ALS-like, pre/post burn).
"""

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import InvalidParameterError
from .geometry import PointCloud, RigidTransform


class SceneLabel(IntEnum):
    GROUND = 0
    TRUNK = 1
    FOLIAGE = 2
    GRASS = 3


@dataclass(frozen=True)
class SceneSpec:
    extent: float = 100.0
    ground_amplitude: float = 2.0
    ground_density: float = 25.0
    n_trees: int = 30
    trunk_radius: Tuple[float, float] = (0.15, 0.4)
    trunk_height: Tuple[float, float] = (6.0, 12.0)
    points_per_tree: int = 4000
    foliage_fraction: float = 0.6
    crown_radius: Tuple[float, float] = (1.5, 3.5)
    leaf_patch_radius: float = 0.15
    leaf_patch_points: int = 20
    grass_density: float = 0.0
    grass_height: float = 0.3
    noise: float = 0.003
    seed: int = 0

    def validate(self) -> 'SceneSpec':
        if not self.extent > 0:
            raise InvalidParameterError(f"extent must be > 0, got {self.extent}")
        if min(self.ground_density, self.grass_density, self.ground_amplitude, self.noise) < 0:
            raise InvalidParameterError("densities, amplitude and noise must be >= 0")
        if self.n_trees < 0 or self.points_per_tree < 0:
            raise InvalidParameterError("tree counts must be >= 0")
        if not 0.0 <= self.foliage_fraction <= 1.0:
            raise InvalidParameterError(f"foliage_fraction must be in [0, 1], got {self.foliage_fraction}")
        return self


class GroundField:
    """Smooth random elevation: a handful of long-wavelength cosines, peak-to-peak ~ amplitude"""

    def __init__(self, amplitude: float, extent: float, rng: np.random.Generator, n_waves: int = 6):
        self.amplitude = amplitude
        wavelengths = rng.uniform(0.3 * extent, 1.2 * extent, size=n_waves)
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n_waves)
        self.kx = 2.0 * np.pi / wavelengths * np.cos(angles)
        self.ky = 2.0 * np.pi / wavelengths * np.sin(angles)
        self.phase = rng.uniform(0.0, 2.0 * np.pi, size=n_waves)
        self.weights = rng.uniform(0.5, 1.0, size=n_waves)
        self.weights /= self.weights.sum()

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.amplitude == 0:
            return np.zeros_like(np.asarray(x, dtype=np.float64))
        waves = np.cos(np.multiply.outer(x, self.kx) + np.multiply.outer(y, self.ky) + self.phase)
        return 0.5 * self.amplitude * (waves @ self.weights)


def _jittered_grid(extent: float, density: float, rng: np.random.Generator) -> np.ndarray:
    if density <= 0:
        return np.empty((0, 2))
    spacing = 1.0 / np.sqrt(density)
    cells = max(int(np.floor(extent / spacing)), 1)
    spacing = extent / cells
    ix, iy = np.meshgrid(np.arange(cells), np.arange(cells), indexing='ij')
    base = np.stack([ix.ravel(), iy.ravel()], axis=1).astype(np.float64)
    return (base + rng.uniform(size=base.shape)) * spacing


def _trunk_points(base: np.ndarray, radius: float, height: float, n: int,
                  rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    z = rng.uniform(0.0, height, size=n)
    return np.stack([base[0] + radius * np.cos(theta),
                     base[1] + radius * np.sin(theta),
                     base[2] + z], axis=1)


def _foliage_points(center: np.ndarray, semi_axes: np.ndarray, n: int, spec: SceneSpec,
                    rng: np.random.Generator) -> np.ndarray:
    """Small leaf discs with random orientation scattered through an ellipsoidal crown"""
    n_patches = max(int(np.ceil(n / max(spec.leaf_patch_points, 1))), 1)
    direction = rng.normal(size=(n_patches, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    reach = rng.uniform(size=(n_patches, 1)) ** (1.0 / 3.0)
    patch_centers = center + direction * reach * semi_axes

    patch_normals = rng.normal(size=(n_patches, 3))
    patch_normals /= np.linalg.norm(patch_normals, axis=1, keepdims=True)
    helper = np.where(np.abs(patch_normals[:, [2]]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = np.cross(patch_normals, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(patch_normals, e1)

    owner = np.arange(n) % n_patches
    rho = spec.leaf_patch_radius * np.sqrt(rng.uniform(size=n))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return (patch_centers[owner] + (rho * np.cos(phi))[:, None] * e1[owner]
            + (rho * np.sin(phi))[:, None] * e2[owner])


def synth_forest_scene(spec: Optional[SceneSpec] = None) -> PointCloud:
    """
    Ground on a jittered grid over a smooth random elevation field, trunks as
    vertical cylinders, foliage as leaf-patch blobs atop the trunks, optional
    grass. The returned cloud carries SceneLabel values as labels.
    """
    spec = (spec or SceneSpec()).validate()
    rng = np.random.default_rng(spec.seed)
    ground = GroundField(spec.ground_amplitude, spec.extent, rng)
    parts, labels = [], []

    xy = _jittered_grid(spec.extent, spec.ground_density, rng)
    parts.append(np.column_stack([xy, ground(xy[:, 0], xy[:, 1])]))
    labels.append(np.full(len(xy), int(SceneLabel.GROUND)))

    n_foliage = int(round(spec.foliage_fraction * spec.points_per_tree))
    n_trunk = spec.points_per_tree - n_foliage
    for _ in range(spec.n_trees):
        x, y = rng.uniform(0.05 * spec.extent, 0.95 * spec.extent, size=2)
        base = np.array([x, y, float(ground(np.array([x]), np.array([y]))[0])])
        radius = rng.uniform(*spec.trunk_radius)
        height = rng.uniform(*spec.trunk_height)
        crown = rng.uniform(*spec.crown_radius)
        if n_trunk:
            parts.append(_trunk_points(base, radius, height, n_trunk, rng))
            labels.append(np.full(n_trunk, int(SceneLabel.TRUNK)))
        if n_foliage:
            # anisotropic: crowns are taller than they are wide
            semi_axes = np.array([crown, crown * rng.uniform(0.7, 1.0), crown * rng.uniform(1.0, 1.6)])
            center = base + np.array([0.0, 0.0, height + 0.5 * semi_axes[2]])
            parts.append(_foliage_points(center, semi_axes, n_foliage, spec, rng))
            labels.append(np.full(n_foliage, int(SceneLabel.FOLIAGE)))

    n_grass = int(round(spec.grass_density * spec.extent ** 2))
    if n_grass:
        gx, gy = rng.uniform(0.0, spec.extent, size=(2, n_grass))
        gz = ground(gx, gy) + rng.uniform(0.0, spec.grass_height, size=n_grass)
        parts.append(np.column_stack([gx, gy, gz]))
        labels.append(np.full(n_grass, int(SceneLabel.GRASS)))

    points = np.concatenate(parts)
    if spec.noise > 0:
        points = points + rng.normal(scale=spec.noise, size=points.shape)
    cloud = PointCloud(points, np.concatenate(labels).astype(np.int64))
    logging.info(f"synth_forest_scene: {cloud.count} points, {spec.n_trees} trees, "
                 f"label counts {label_counts(cloud)}")
    return cloud


def label_counts(cloud: PointCloud) -> Dict[str, int]:
    if cloud.labels is None:
        return {}
    return {label.name.lower(): int(np.count_nonzero(cloud.labels == label)) for label in SceneLabel}


def _resample(cloud: PointCloud, keep_fraction: float, noise: float,
              rng: np.random.Generator) -> PointCloud:
    keep = rng.uniform(size=cloud.count) < keep_fraction
    points = cloud.points[keep]
    if noise > 0:
        points = points + rng.normal(scale=noise, size=points.shape)
    labels = None if cloud.labels is None else cloud.labels[keep]
    return PointCloud(points, labels)


@dataclass(frozen=True, eq=False)
class ViewPair:
    source: PointCloud
    target: PointCloud
    truth: RigidTransform  # maps source coordinates into the target frame


def scan_centre(cloud: PointCloud) -> np.ndarray:
    lower, upper = cloud.bounds()
    return (lower + upper) / 2.0


def make_view_pair(scene: PointCloud, overlap: float, truth: Optional[RigidTransform] = None,
                   seed: int = 0, keep_fraction: float = 0.8, noise: float = 0.003) -> ViewPair:
    """
    Two windows along x sharing `overlap` of their area, each independently
    subsampled and noised, each expressed about its own scan centre. `truth`
    poses the source scan about that centre; the returned ViewPair.truth also
    carries the offset between the two centres, so pair.truth.apply(source)
    lands on the target.
    """
    if not 0.0 < overlap <= 1.0:
        raise InvalidParameterError(f"overlap must be in (0, 1], got {overlap}")
    truth = truth or RigidTransform.identity()
    rng = np.random.default_rng(seed)
    lower, upper = scene.bounds()
    length = upper[0] - lower[0]
    width = length / (2.0 - overlap)
    shift = width * (1.0 - overlap)
    x = scene.points[:, 0]
    in_a = x <= lower[0] + width
    in_b = (x >= lower[0] + shift) & (x <= lower[0] + shift + width)

    view_a = _resample(scene.subset(in_a), keep_fraction, noise, rng)
    view_b = _resample(scene.subset(in_b), keep_fraction, noise, rng)
    centre_a, centre_b = scan_centre(view_a), scan_centre(view_b)
    source = PointCloud(truth.inverse().apply(view_a.points - centre_a), view_a.labels)
    target = PointCloud(view_b.points - centre_b, view_b.labels)
    full_truth = RigidTransform(truth.rotation, truth.translation + centre_a - centre_b)
    logging.debug(f"make_view_pair: {source.count} source / {target.count} target points, "
                  f"centres {centre_b - centre_a} m apart")
    return ViewPair(source, target, full_truth)


def sparsify_as_als(cloud: PointCloud, density: float = 15.0, seed: int = 0) -> PointCloud:
    """Aerial-like view: trunks (mid-story) dropped, the rest thinned to `density` pts/m^2"""
    if not density > 0:
        raise InvalidParameterError(f"density must be > 0, got {density}")
    kept = cloud if cloud.labels is None else cloud.subset(cloud.labels != SceneLabel.TRUNK)
    if kept.is_empty:
        return kept
    lower, upper = kept.bounds()
    area = max(float((upper[0] - lower[0]) * (upper[1] - lower[1])), 1e-9)
    fraction = min(1.0, density * area / kept.count)
    rng = np.random.default_rng(seed)
    return kept.subset(rng.uniform(size=kept.count) < fraction)


def thin_surface_fuels(cloud: PointCloud, keep_fraction: float, seed: int = 0) -> PointCloud:
    """Post-burn view: keep only `keep_fraction` of the grass points"""
    if not 0.0 <= keep_fraction <= 1.0:
        raise InvalidParameterError(f"keep_fraction must be in [0, 1], got {keep_fraction}")
    if cloud.labels is None:
        return cloud
    rng = np.random.default_rng(seed)
    grass = cloud.labels == SceneLabel.GRASS
    drop = grass & (rng.uniform(size=cloud.count) >= keep_fraction)
    return cloud.subset(~drop)
