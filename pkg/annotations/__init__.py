"""
Coarse-annotation synthesis from fine label maps.
"""

from .morphology import distance_to_unset, erode_mask, within_distance
from .contours import trace_contours
from .polygons import Polygon, douglas_peucker, polygon_mask, rasterize, segment_distances
from .coarsen import (
    CoarsenResult,
    DEFAULT_EPSILON,
    class_polygons,
    coarsen,
    coarsen_with_polygons,
    unlabeled_fraction,
)

__all__ = [
    "distance_to_unset",
    "erode_mask",
    "within_distance",
    "trace_contours",
    "Polygon",
    "douglas_peucker",
    "polygon_mask",
    "rasterize",
    "segment_distances",
    "CoarsenResult",
    "DEFAULT_EPSILON",
    "class_polygons",
    "coarsen",
    "coarsen_with_polygons",
    "unlabeled_fraction",
]
