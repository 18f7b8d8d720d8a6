"""Random field theory P-values and thresholds for smooth statistic fields."""

from .ecdensity import StatDescriptor, StatKind, ec_density
from .geometry import SearchRegion, ball_region, box_region
from .inference import PValueQuery, expected_ec, threshold

__all__ = [
    "StatDescriptor", "StatKind", "ec_density",
    "SearchRegion", "ball_region", "box_region",
    "PValueQuery", "expected_ec", "threshold",
]
__version__ = "0.1.0"
