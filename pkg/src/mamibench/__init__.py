"""Massive-MIMO baseband simulator and hardware-partitioning planner."""

from .errors import MamiError

__version__ = "0.1.0"
__all__ = ["MamiError", "__version__"]
