"""Uniform domino tilings of multiply connected Temperleyan polyominoes.

Exact Kasteleyn sampling, Thurston height statistics, and numerical
continuum predictions (Green's function, harmonic measures, period matrix,
theta functions, discrete Gaussian hole-height law) with a verification CLI.
"""

__version__ = "0.1.0"

from .region import (
    Circle,
    DomainSpec,
    PolyominoRegion,
    RectilinearPolygon,
    build_temperleyan,
    color_of,
    rectangle,
    validate_region,
)

__all__ = [
    "Circle",
    "DomainSpec",
    "PolyominoRegion",
    "RectilinearPolygon",
    "build_temperleyan",
    "color_of",
    "rectangle",
    "validate_region",
    "__version__",
]
