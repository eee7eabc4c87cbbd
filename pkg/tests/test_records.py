"""Tests for forestalign.records: transform JSON, trials CSV, summary JSON."""

import csv
import json

import numpy as np
import pytest

from forestalign import __version__
from forestalign.errors import InvalidParameterError
from forestalign.evaluation import TrialReport, TrialRow
from forestalign.geometry import RigidTransform
from forestalign.records import (TRIAL_COLUMNS, TransformRecord, summary_payload, write_summary_json,
                                 write_trials_csv)


def sample_report():
    rows = [
        TrialRow(trial=0, initial_error=np.array([1.0, 2.0, 3.0, 0.1, 0.2, 0.3]),
                 final_error=np.array([0.1, 0.0, -0.1, 0.01, 0.0, 0.0]), rotation_error=0.15,
                 translation_error=0.01, overlap_percent=80.0, inlier_rmse=0.02, wall_time=1.5),
        TrialRow(trial=1, initial_error=np.array([-4.0, 0.0, 0.0, 1.0, 0.0, 0.0]), wall_time=0.5,
                 error='[level-1] no target point within 0.25 m'),
    ]
    return TrialReport(rows, 'forest_align')


def test_transform_record_schema(tmp_path):
    T = RigidTransform.from_euler6([1.0, -2.0, 30.0, 4.0, 5.0, -6.0])
    path = str(tmp_path / 'transform.json')
    TransformRecord(T, 'a.ply', 'b.ply', 'abc123').write(path)
    with open(path) as f:
        payload = json.load(f)
    assert set(payload) == {'matrix', 'euler', 'source', 'target', 'config_hash', 'tool_version', 'metadata'}
    assert set(payload['euler']) == {'roll', 'pitch', 'yaw', 'tx', 'ty', 'tz'}
    assert payload['tool_version'] == __version__
    assert 'timestamp' in payload['metadata']
    np.testing.assert_allclose(payload['matrix'], T.matrix)


def test_transform_record_reads_back(tmp_path):
    T = RigidTransform.from_euler6([0.5, 0.0, -120.0, 1.0, 2.0, 3.0])
    path = str(tmp_path / 'transform.json')
    TransformRecord(T, extra={'overlap': 0.6}).write(path)
    record = TransformRecord.read(path)
    np.testing.assert_array_equal(record.transform.matrix, T.matrix)
    assert record.extra == {'overlap': 0.6}


def test_transform_record_rejects_improper_rotation():
    matrix = np.eye(4)
    matrix[2, 2] = -1.0
    with pytest.raises(InvalidParameterError):
        TransformRecord.from_dict({'matrix': matrix.tolist()})


def test_transform_record_rejects_inconsistent_euler():
    payload = TransformRecord(RigidTransform.identity()).to_dict()
    payload['euler']['yaw'] = 5.0
    with pytest.raises(InvalidParameterError):
        TransformRecord.from_dict(payload)


@pytest.mark.parametrize('euler', [{'roll': 0.0}, None, {'roll': 'a', 'pitch': 0, 'yaw': 0,
                                                         'tx': 0, 'ty': 0, 'tz': 0}])
def test_transform_record_rejects_incomplete_euler(euler):
    payload = TransformRecord(RigidTransform.identity()).to_dict()
    payload['euler'] = euler
    with pytest.raises(InvalidParameterError):
        TransformRecord.from_dict(payload)


def test_transform_record_read_rejects_broken_json(tmp_path):
    path = tmp_path / 'truth.json'
    path.write_text('{"matrix": [[1, 0')
    with pytest.raises(InvalidParameterError):
        TransformRecord.read(str(path))


def test_trials_csv(tmp_path):
    path = str(tmp_path / 'trials.csv')
    write_trials_csv(path, sample_report())
    with open(path, newline='') as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == TRIAL_COLUMNS
    assert 'wall_time' not in rows[0]
    assert rows[0]['failed'] == '0'
    assert float(rows[0]['final_yaw']) == pytest.approx(-0.1)
    assert rows[1]['failed'] == '1'
    assert rows[1]['final_roll'] == 'nan'
    assert rows[1]['error'].startswith('[level-1]')


def test_summary_keeps_timing_in_metadata(tmp_path):
    report = sample_report()
    path = str(tmp_path / 'summary.json')
    write_summary_json(path, report)
    with open(path) as f:
        payload = json.load(f)
    assert payload['n_trials'] == 2
    assert payload['n_failed'] == 1
    assert payload['rmse']['yaw'] == pytest.approx(0.1)
    assert payload['success_rate'] == pytest.approx(0.5)
    assert payload['metadata']['wall_times'] == [1.5, 0.5]

    a, b = summary_payload(report), summary_payload(report)
    a.pop('metadata')
    b.pop('metadata')
    assert a == b
