"""
On-disk records: transform JSON, per-trial CSV, summary JSON.
All writes go to a temp file in the destination directory, then os.replace.
Anything time-dependent lives under "metadata" so the rest is reproducible.
"""

import io
import os
import csv
import json
import tempfile
from datetime import datetime, timezone
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import __version__
from .errors import InvalidParameterError
from .evaluation import PARAMETER_NAMES, TrialReport
from .geometry import RigidTransform

SO3_TOLERANCE = 1e-9


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def atomic_write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_json(path: str, payload: Dict):
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + '\n')


@dataclass(frozen=True, eq=False)
class TransformRecord:
    transform: RigidTransform
    source: str = ''
    target: str = ''
    config_hash: str = ''
    tool_version: str = __version__
    extra: Dict = field(default_factory=dict)
    metadata: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        euler = self.transform.to_euler6()
        payload = {
            'matrix': self.transform.matrix.tolist(),
            'euler': dict(zip(PARAMETER_NAMES, (float(v) for v in euler))),
            'source': self.source,
            'target': self.target,
            'config_hash': self.config_hash,
            'tool_version': self.tool_version,
            'metadata': {'timestamp': _now(), **self.metadata},
        }
        payload.update(self.extra)
        return payload

    @classmethod
    def from_dict(cls, payload: Dict) -> 'TransformRecord':
        try:
            matrix = np.asarray(payload['matrix'], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidParameterError(f"transform record without a usable matrix: {e}")
        transform = RigidTransform.from_matrix(matrix)
        if not transform.is_proper(SO3_TOLERANCE):
            raise InvalidParameterError("transform record rotation is not in SO(3)")
        if 'euler' in payload:
            try:
                euler = np.array([float(payload['euler'][name]) for name in PARAMETER_NAMES])
            except (KeyError, TypeError, ValueError) as e:
                raise InvalidParameterError(f"transform record euler is incomplete: {e}")
            rebuilt = RigidTransform.from_euler6(euler)
            if np.max(np.abs(rebuilt.matrix - transform.matrix)) > SO3_TOLERANCE:
                raise InvalidParameterError("transform record euler and matrix disagree")
        known = {'matrix', 'euler', 'source', 'target', 'config_hash', 'tool_version', 'metadata'}
        return cls(transform, payload.get('source', ''), payload.get('target', ''),
                   payload.get('config_hash', ''), payload.get('tool_version', __version__),
                   extra={k: v for k, v in payload.items() if k not in known},
                   metadata=payload.get('metadata', {}))

    def write(self, path: str):
        write_json(path, self.to_dict())

    @classmethod
    def read(cls, path: str) -> 'TransformRecord':
        with open(path, 'r') as f:
            try:
                payload = json.load(f)
            except (json.JSONDecodeError, UnicodeDecodeError) as e:
                raise InvalidParameterError(f"{path} is not a JSON transform record: {e}")
        return cls.from_dict(payload)


TRIAL_COLUMNS = (['trial', 'failed']
                 + [f"init_{name}" for name in PARAMETER_NAMES]
                 + [f"final_{name}" for name in PARAMETER_NAMES]
                 + ['rotation_error', 'translation_error', 'overlap_percent', 'inlier_rmse', 'error'])


def _fmt(value: float) -> str:
    return repr(float(value))


def trials_csv_text(report: TrialReport) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=TRIAL_COLUMNS, lineterminator='\n')
    writer.writeheader()
    for row in report.rows:
        final = row.final_error if not row.failed else np.full(len(PARAMETER_NAMES), np.nan)
        record = {'trial': row.trial, 'failed': int(row.failed), 'error': row.error}
        record.update({f"init_{n}": _fmt(v) for n, v in zip(PARAMETER_NAMES, row.initial_error)})
        record.update({f"final_{n}": _fmt(v) for n, v in zip(PARAMETER_NAMES, final)})
        record.update({
            'rotation_error': _fmt(row.rotation_error),
            'translation_error': _fmt(row.translation_error),
            'overlap_percent': _fmt(row.overlap_percent),
            'inlier_rmse': _fmt(row.inlier_rmse),
        })
        writer.writerow(record)
    return buffer.getvalue()


def write_trials_csv(path: str, report: TrialReport):
    atomic_write_text(path, trials_csv_text(report))


def summary_payload(report: TrialReport, extra: Optional[Dict] = None) -> Dict:
    payload = {
        'method': report.method,
        'n_trials': len(report.rows),
        'n_failed': report.n_failed,
        'rmse': report.rmse_dict(),
        'initial_rmse': dict(zip(PARAMETER_NAMES, (float(v) for v in report.initial_rmse))),
        'success_rate': report.success_rate(),
        'tool_version': __version__,
        'metadata': {
            'timestamp': _now(),
            'wall_times': [row.wall_time for row in report.rows],
        },
    }
    payload.update(extra or {})
    return payload


def write_summary_json(path: str, report: TrialReport, extra: Optional[Dict] = None):
    write_json(path, summary_payload(report, extra))
