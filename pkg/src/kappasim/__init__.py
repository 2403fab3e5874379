"""Simulation and analysis tools for three-slot interference experiments."""

from .curve import KappaCurve
from .geometry import (
    BACKGROUND,
    FULL,
    Combination,
    DetectorLine,
    PlaneLayout,
    build_plane,
    enumerate_combinations,
)

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "FULL",
    "Combination",
    "DetectorLine",
    "KappaCurve",
    "PlaneLayout",
    "build_plane",
    "enumerate_combinations",
    "__version__",
]
