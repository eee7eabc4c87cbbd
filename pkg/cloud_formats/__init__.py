from .base import CloudFormat
from .manager import CloudFormatManager, get_manager, read_cloud, write_cloud

__all__ = ['CloudFormat', 'CloudFormatManager', 'get_manager', 'read_cloud', 'write_cloud']
__version__ = '1.0.0'
