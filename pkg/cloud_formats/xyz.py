"""
Plain-text XYZ plugin: one point per line, whitespace or comma separated,
x y z first, an optional integer label fourth. Blank lines and '#' comments
are skipped.
"""

from typing import List

import numpy as np

from forestalign.errors import CloudParseError
from forestalign.geometry import PointCloud
from .base import CloudFormat


class XyzFormat(CloudFormat):
    """ASCII x y z [label] files"""

    @property
    def format_code(self) -> str:
        return "XYZ"

    @property
    def extensions(self) -> List[str]:
        return ['.xyz', '.txt', '.pts']

    def read(self, path: str) -> PointCloud:
        points, labels = [], []
        with_labels = None
        with open(path, 'rb') as f:
            for number, encoded in enumerate(f, start=1):
                try:
                    raw = encoded.decode('utf-8')
                except UnicodeDecodeError as e:
                    raise CloudParseError(f"not UTF-8 text ({e.reason})", path, 'line', number)
                line = raw.split('#', 1)[0].replace(',', ' ').strip()
                if not line:
                    continue
                tokens = line.split()
                if len(tokens) < 3:
                    raise CloudParseError(f"expected at least 3 values, got {len(tokens)}",
                                          path, 'line', number)
                try:
                    xyz = [float(t) for t in tokens[:3]]
                except ValueError as e:
                    raise CloudParseError(str(e), path, 'line', number)
                if not np.all(np.isfinite(xyz)):
                    raise CloudParseError("non-finite coordinate", path, 'line', number)
                if with_labels is None:
                    with_labels = len(tokens) >= 4
                if with_labels:
                    if len(tokens) < 4:
                        raise CloudParseError("missing label column", path, 'line', number)
                    try:
                        labels.append(int(float(tokens[3])))
                    except ValueError as e:
                        raise CloudParseError(str(e), path, 'line', number)
                points.append(xyz)
        return PointCloud(np.array(points).reshape(-1, 3), labels if with_labels else None)

    def dumps(self, cloud: PointCloud) -> bytes:
        rows = []
        for i, point in enumerate(cloud.points):
            row = ' '.join(repr(float(v)) for v in point)
            if cloud.labels is not None:
                row += f' {int(cloud.labels[i])}'
            rows.append(row)
        return ('\n'.join(rows) + ('\n' if rows else '')).encode('ascii')
