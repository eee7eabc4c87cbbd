"""
ForestAlign configuration.
Environment first (.env via python-dotenv), then typed pipeline settings whose
defaults come from the environment, falling back to the standard pipeline settings.
"""

import os
import json
import hashlib
import logging
from dataclasses import dataclass, field, asdict, replace
from typing import Dict, List, Optional, Tuple

from dotenv import load_dotenv

from .errors import InvalidParameterError

# --- Load environment variables ---
load_dotenv()

FORESTALIGN_THREADS = int(os.getenv('FORESTALIGN_THREADS', '0'))
LOG_FILE = os.getenv('FORESTALIGN_LOG_FILE', '')
LOG_LEVEL = os.getenv('FORESTALIGN_LOG_LEVEL', 'INFO')

DEFAULT_VOXEL = float(os.getenv('FORESTALIGN_VOXEL', '0.05'))
DEFAULT_REFINE_VOXEL = float(os.getenv('FORESTALIGN_REFINE_VOXEL', '0.025'))
DEFAULT_RADIUS = float(os.getenv('FORESTALIGN_RADIUS', '0.25'))
DEFAULT_MAX_CORR_DIST = float(os.getenv('FORESTALIGN_MAX_CORR_DIST', '0.25'))
DEFAULT_SEED = int(os.getenv('FORESTALIGN_SEED', '0'))
DEFAULT_CAPTURE_SHIFT = float(os.getenv('FORESTALIGN_CAPTURE_SHIFT', '40'))
DEFAULT_CAPTURE_YAW = float(os.getenv('FORESTALIGN_CAPTURE_YAW', '60'))

# K per platform: TLS, ALS, scenes without trees
K_TLS = 3
K_ALS = 2
K_TREELESS = 1
MAX_K = 4

LOG_FORMAT = '%(asctime)s | %(levelname)s | %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """Root logger setup, file when FORESTALIGN_LOG_FILE is set, stderr otherwise"""
    log_file = LOG_FILE if log_file is None else log_file
    level_name = (level or LOG_LEVEL).upper()
    kwargs = dict(
        level=getattr(logging, level_name, logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
        force=True,
    )
    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        kwargs['filename'] = log_file
    logging.basicConfig(**kwargs)


def worker_count(threads: Optional[int] = None) -> int:
    """Map FORESTALIGN_THREADS (0 = auto) to scipy's `workers` argument"""
    threads = FORESTALIGN_THREADS if threads is None else threads
    if threads <= 0:
        return -1
    return threads


@dataclass(frozen=True)
class IcpConfig:
    max_corr_dist: float = DEFAULT_MAX_CORR_DIST
    max_iterations: int = 50
    rel_tolerance: float = 1e-6

    def validate(self) -> 'IcpConfig':
        if not self.max_corr_dist > 0:
            raise InvalidParameterError(f"max_corr_dist must be > 0, got {self.max_corr_dist}")
        if self.max_iterations < 1:
            raise InvalidParameterError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.rel_tolerance < 0:
            raise InvalidParameterError(f"rel_tolerance must be >= 0, got {self.rel_tolerance}")
        return self


@dataclass(frozen=True)
class ForestAlignConfig:
    voxel: float = DEFAULT_VOXEL
    refine_voxel: float = DEFAULT_REFINE_VOXEL
    radius: float = DEFAULT_RADIUS
    k_source: int = K_TLS
    k_target: int = K_TLS
    icp: IcpConfig = field(default_factory=IcpConfig)
    seed: int = DEFAULT_SEED
    level_iterations: int = 30
    level_rel_tolerance: float = 1e-6
    final_iterations: int = 50
    n_init: int = 5
    # each level stage runs ICP at these multiples of icp.max_corr_dist, in order
    level_schedule: Tuple[float, ...] = (16.0, 4.0, 1.0)
    capture: bool = True
    capture_shift: float = DEFAULT_CAPTURE_SHIFT
    capture_yaw: float = DEFAULT_CAPTURE_YAW
    capture_yaw_step: float = 2.0

    def validate(self) -> 'ForestAlignConfig':
        for name in ('voxel', 'refine_voxel', 'radius'):
            value = getattr(self, name)
            if not value > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {value}")
        for name in ('k_source', 'k_target'):
            value = getattr(self, name)
            if not 1 <= value <= MAX_K:
                raise InvalidParameterError(f"{name} must be in [1, {MAX_K}], got {value}")
        if self.level_iterations < 1 or self.final_iterations < 1:
            raise InvalidParameterError("iteration budgets must be >= 1")
        if self.n_init < 1:
            raise InvalidParameterError(f"n_init must be >= 1, got {self.n_init}")
        schedule = tuple(self.level_schedule)
        if (not schedule or schedule[-1] != 1.0 or min(schedule) < 1.0
                or any(a < b for a, b in zip(schedule, schedule[1:]))):
            raise InvalidParameterError(
                f"level_schedule must be non-increasing multiples >= 1 ending at 1, got {schedule}")
        if self.capture_shift < 0 or self.capture_yaw < 0:
            raise InvalidParameterError("capture window must be >= 0")
        if not self.capture_yaw_step > 0:
            raise InvalidParameterError(f"capture_yaw_step must be > 0, got {self.capture_yaw_step}")
        self.icp.validate()
        return self

    def level_icp(self) -> IcpConfig:
        return replace(self.icp, max_iterations=self.level_iterations,
                       rel_tolerance=self.level_rel_tolerance)

    def level_distances(self) -> List[float]:
        """Correspondence thresholds of one level stage, coarse to fine"""
        return [factor * self.icp.max_corr_dist for factor in self.level_schedule]

    def refine_icp(self) -> IcpConfig:
        return replace(self.icp, max_iterations=min(self.icp.max_iterations, self.final_iterations))

    def with_seed(self, seed: int) -> 'ForestAlignConfig':
        return replace(self, seed=seed)

    def to_dict(self) -> Dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()
