__version__ = '1.0.0'

from .errors import ForestAlignError
from .config import ForestAlignConfig, IcpConfig, configure_logging
from .geometry import (PointCloud, RigidTransform, SpatialIndex, apply_transform, compose, invert,
                       voxel_downsample)
from .normals import NormalField, estimate_normals
from .vmf import ComplexityProfile, VmfMixture, fit_vmf_mixture, structural_complexity
from .matching import GroupAssignment, match_groups
from .capture import Capture, capture
from .registration import (RegistrationResult, forest_align, icp, level_icp, plain_icp,
                           register_to_reference)
from .scene import SceneSpec, make_view_pair, synth_forest_scene
from .evaluation import TrialSpec, TrialReport, param_rmse, run_trials, compare_methods
from .records import TransformRecord

__all__ = [
    'ForestAlignError', 'ForestAlignConfig', 'IcpConfig', 'configure_logging',
    'PointCloud', 'RigidTransform', 'SpatialIndex', 'apply_transform', 'compose', 'invert',
    'voxel_downsample', 'NormalField', 'estimate_normals',
    'ComplexityProfile', 'VmfMixture', 'fit_vmf_mixture', 'structural_complexity',
    'GroupAssignment', 'match_groups', 'Capture', 'capture',
    'RegistrationResult', 'forest_align', 'icp', 'level_icp', 'plain_icp', 'register_to_reference',
    'SceneSpec', 'make_view_pair', 'synth_forest_scene',
    'TrialSpec', 'TrialReport', 'param_rmse', 'run_trials', 'compare_methods',
    'TransformRecord',
]
