"""Depth-supervised voxel radiance fields."""

__version__ = "0.1.0"
