"""
Base class for point-cloud file format plugins.
Each on-disk format implements its own reader and writer; the manager picks
one by file extension.
"""

from abc import ABC, abstractmethod
from typing import List

from forestalign.geometry import PointCloud


class CloudFormat(ABC):
    """Abstract base class for a point-cloud file format"""

    @property
    @abstractmethod
    def format_code(self) -> str:
        """Short code (e.g., 'PLY', 'XYZ')"""
        pass

    @property
    @abstractmethod
    def extensions(self) -> List[str]:
        """Lower-case extensions handled, dot included (e.g., ['.ply'])"""
        pass

    @abstractmethod
    def read(self, path: str) -> PointCloud:
        """
        Parse `path` into a PointCloud.
        Raises CloudParseError with a line or byte offset on malformed input.
        """
        pass

    @abstractmethod
    def dumps(self, cloud: PointCloud) -> bytes:
        """Serialize the cloud; the manager does the atomic write"""
        pass

    def handles(self, path: str) -> bool:
        return any(path.lower().endswith(ext) for ext in self.extensions)
