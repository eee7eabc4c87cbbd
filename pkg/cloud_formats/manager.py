"""
Cloud Format Manager
Automatically loads point-cloud format plugins and dispatches by extension.
"""

import os
import importlib
import logging
import tempfile
from typing import Dict, Optional

from forestalign.errors import CloudParseError
from forestalign.geometry import PointCloud
from .base import CloudFormat


class CloudFormatManager:
    """Manages point-cloud file format plugins"""

    def __init__(self):
        self.plugins: Dict[str, CloudFormat] = {}
        self.load_plugins()

    def load_plugins(self):
        """Automatically discover and load all plugins"""
        plugins_dir = os.path.dirname(__file__)

        for filename in sorted(os.listdir(plugins_dir)):
            if filename.endswith('.py') and filename not in ['__init__.py', 'base.py', 'manager.py']:
                module_name = filename[:-3]

                try:
                    module = importlib.import_module(f'cloud_formats.{module_name}')

                    for attr_name in dir(module):
                        attr = getattr(module, attr_name)
                        if (isinstance(attr, type) and
                                issubclass(attr, CloudFormat) and
                                attr != CloudFormat):

                            plugin = attr()
                            self.plugins[plugin.format_code] = plugin
                            logging.debug(f"✅ Loaded cloud format: {plugin.format_code} "
                                          f"({', '.join(plugin.extensions)})")

                except Exception as e:
                    logging.error(f"❌ Failed to load cloud format {module_name}: {e}")

    def get_plugin(self, format_code: str) -> Optional[CloudFormat]:
        return self.plugins.get(format_code.upper())

    def detect(self, path: str) -> CloudFormat:
        """Plugin for the file's extension"""
        for plugin in self.plugins.values():
            if plugin.handles(path):
                return plugin
        known = sorted(ext for plugin in self.plugins.values() for ext in plugin.extensions)
        raise CloudParseError(f"unknown point-cloud extension (known: {', '.join(known)})",
                              path=path, offset_kind='line', offset=0)

    def list_available(self) -> Dict[str, str]:
        return {code: ', '.join(plugin.extensions) for code, plugin in self.plugins.items()}

    def read_cloud(self, path: str) -> PointCloud:
        if not os.path.exists(path):
            raise CloudParseError("file not found", path=path, offset_kind='line', offset=0)
        cloud = self.detect(path).read(path)
        logging.info(f"📂 Read {cloud.count} points from {path}")
        return cloud

    def write_cloud(self, path: str, cloud: PointCloud):
        """Write through a temp file in the same directory, then rename over `path`"""
        payload = self.detect(path).dumps(cloud)
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
        try:
            with os.fdopen(fd, 'wb') as f:
                f.write(payload)
            os.replace(tmp_path, path)
        except Exception:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
            raise
        logging.info(f"💾 Wrote {cloud.count} points to {path}")


_manager: Optional[CloudFormatManager] = None


def get_manager() -> CloudFormatManager:
    global _manager
    if _manager is None:
        _manager = CloudFormatManager()
    return _manager


def read_cloud(path: str) -> PointCloud:
    return get_manager().read_cloud(path)


def write_cloud(path: str, cloud: PointCloud):
    get_manager().write_cloud(path, cloud)
