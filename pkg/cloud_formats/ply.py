"""
Stanford PLY plugin on top of plyfile.
Reads ascii, binary_little_endian and binary_big_endian vertex data with
float or double x/y/z; other properties and elements are ignored except the
vertex `label`. Writes binary_little_endian doubles.
"""

import io
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from plyfile import PlyData, PlyElement, PlyElementParseError, PlyHeaderParseError, PlyParseError

from forestalign.errors import CloudParseError
from forestalign.geometry import PointCloud
from .base import CloudFormat

LABEL_PROPERTY = 'label'


@dataclass(frozen=True)
class _Layout:
    """Where the body starts and how it is laid out, taken from the raw header"""
    text: bool
    header_lines: int
    body_start: int
    elements: Tuple[Tuple[str, int], ...]

    def rows_before(self, name: str) -> int:
        rows = 0
        for element, count in self.elements:
            if element == name:
                break
            rows += count
        return rows


def _layout(data: bytes) -> _Layout:
    end = data.find(b'end_header')
    newline = data.find(b'\n', end)
    body_start = len(data) if newline < 0 else newline + 1
    header = data[:body_start].decode('ascii', errors='replace').splitlines()
    elements = []
    for line in header:
        tokens = line.split()
        if len(tokens) >= 3 and tokens[0] == 'element' and tokens[2].isdigit():
            elements.append((tokens[1], int(tokens[2])))
    text = any(line.split()[:2] == ['format', 'ascii'] for line in header)
    return _Layout(text, len(header), body_start, tuple(elements))


class PlyFormat(CloudFormat):
    """PLY point clouds (vertex element only)"""

    @property
    def format_code(self) -> str:
        return "PLY"

    @property
    def extensions(self) -> List[str]:
        return ['.ply']

    def _body_error(self, path: str, data: bytes, layout: _Layout, message: str,
                    element: str = 'vertex', row=None) -> CloudParseError:
        if layout.text:
            line = layout.header_lines
            if row is not None:
                line += layout.rows_before(element) + row + 1
            return CloudParseError(message, path, 'line', line)
        # binary bodies only fail by running out of bytes
        return CloudParseError(message, path, 'byte', len(data))

    def read(self, path: str) -> PointCloud:
        with open(path, 'rb') as f:
            data = f.read()
        try:
            ply = PlyData.read(io.BytesIO(data))
        except PlyHeaderParseError as e:
            raise CloudParseError(f"bad header: {e.message}", path, 'line', e.line or 0)
        except PlyElementParseError as e:
            name = e.element.name if e.element is not None else 'vertex'
            raise self._body_error(path, data, _layout(data), e.message, name, e.row)
        except (PlyParseError, StopIteration, ValueError) as e:
            raise self._body_error(path, data, _layout(data), f"malformed element data: {e}")

        layout = _layout(data)
        if 'vertex' not in ply:
            raise CloudParseError("no vertex element", path, 'line', layout.header_lines)
        table = ply['vertex'].data
        names = table.dtype.names or ()
        for axis in ('x', 'y', 'z'):
            if axis not in names or table.dtype[axis].kind != 'f':
                raise CloudParseError(f"vertex needs float or double '{axis}'", path, 'line',
                                      layout.header_lines)

        points = np.column_stack([table['x'], table['y'], table['z']]).astype(np.float64)
        bad = np.flatnonzero(~np.all(np.isfinite(points), axis=1))
        if bad.size:
            row = int(bad[0])
            if layout.text:
                raise CloudParseError("non-finite coordinate", path, 'line',
                                      layout.header_lines + layout.rows_before('vertex') + row + 1)
            before = 0
            for element in ply.elements:
                if element.name == 'vertex':
                    break
                before += element.data.dtype.itemsize * element.count
            raise CloudParseError("non-finite coordinate", path, 'byte',
                                  layout.body_start + before + row * table.dtype.itemsize)

        labels = None
        if LABEL_PROPERTY in names:
            labels = np.asarray(table[LABEL_PROPERTY]).astype(np.int64)
        return PointCloud(points, labels)

    def dumps(self, cloud: PointCloud) -> bytes:
        fields = [('x', '<f8'), ('y', '<f8'), ('z', '<f8')]
        if cloud.labels is not None:
            fields.append((LABEL_PROPERTY, '<i4'))
        table = np.empty(cloud.count, dtype=np.dtype(fields))
        table['x'], table['y'], table['z'] = cloud.points.T
        if cloud.labels is not None:
            table[LABEL_PROPERTY] = cloud.labels
        buffer = io.BytesIO()
        PlyData([PlyElement.describe(table, 'vertex')], text=False, byte_order='<',
                comments=['forestalign']).write(buffer)
        return buffer.getvalue()
