"""Integrated sensing and quantum network simulator."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("isaqn-sim")
except PackageNotFoundError:
    __version__ = "0.0.0"
