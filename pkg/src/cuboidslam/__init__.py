"""Monocular object SLAM toolkit: single-image cuboid detection, object-level
bundle adjustment (static and dynamic), and a synthetic verification harness."""

__version__ = "0.1.0"
