"""Calibrate several RGB-D sensors and fuse their body-tracking skeletons."""

__version__ = "0.1.0"
