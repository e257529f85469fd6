"""Parking occupancy detection from sparse probe-vehicle radar points."""

__version__ = "0.1.0"
