"""
Coarse annotations from fine ones: per-class erosion, outer-contour tracing,
Douglas-Peucker simplification and polygon rasterization.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from engine.errors import ParameterError
from engine.tensor import LabelMap, UNLABELED
from .contours import trace_contours
from .morphology import erode_mask, within_distance
from .polygons import Polygon, douglas_peucker, polygon_mask

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 2.0


@dataclass(frozen=True)
class CoarsenResult:
    """Coarse labels plus the polygons that produced them"""
    labels: LabelMap
    polygons: Tuple[Polygon, ...]
    dropped_contours: int

    @property
    def unlabeled_fraction(self) -> float:
        return unlabeled_fraction(self.labels)


def unlabeled_fraction(labels: LabelMap) -> float:
    return float(np.count_nonzero(~labels.labeled)) / labels.ids.size


def class_polygons(fine: LabelMap, radius: float, epsilon: float) -> Tuple[List[Polygon], Dict[int, np.ndarray], int]:
    """Simplified outer polygons of every eroded class region"""
    polygons: List[Polygon] = []
    regions: Dict[int, np.ndarray] = {}
    dropped = 0
    for class_id in np.unique(fine.ids):
        if class_id == UNLABELED:
            continue
        eroded = erode_mask(fine.ids == class_id, radius)
        if not eroded.any():
            logger.debug(f"Class {class_id} vanished under erosion radius {radius}")
            continue
        regions[int(class_id)] = eroded
        for contour in trace_contours(eroded):
            simplified = douglas_peucker(contour, epsilon, closed=True)
            if len(simplified) < 3:
                dropped += 1
                continue
            polygons.append(Polygon(int(class_id), tuple((x + 0.5, y + 0.5) for x, y in simplified)))
    return polygons, regions, dropped


def coarsen_with_polygons(fine: LabelMap, radius: float, epsilon: float = DEFAULT_EPSILON) -> CoarsenResult:
    """Coarse labels together with the polygons drawn.

    Contours pass through boundary-pixel centers and are rasterized with their
    edges included. Each polygon only labels pixels within epsilon of its
    class's eroded region, so holes ignored by the outer contour stay
    unlabeled. Larger polygons are drawn first so enclosed ones stay on top.
    """
    if radius < 0:
        raise ParameterError(f"radius must be non-negative, got {radius}")
    if epsilon < 0:
        raise ParameterError(f"epsilon must be non-negative, got {epsilon}")

    polygons, regions, dropped = class_polygons(fine, radius, epsilon)
    reach = {class_id: within_distance(region, epsilon) for class_id, region in regions.items()}

    ordered = sorted(polygons, key=lambda p: -p.area)
    ids = np.full(fine.shape, UNLABELED, dtype=np.int64)
    for polygon in ordered:
        mask = polygon_mask(polygon, fine.shape, include_edges=True) & reach[polygon.class_id]
        ids[mask] = polygon.class_id

    labels = LabelMap(ids)
    if dropped:
        logger.debug(f"Dropped {dropped} degenerate contour(s) during coarsening")
    if not labels.labeled.any() and fine.labeled.any():
        logger.warning(f"Erosion radius {radius} removed every labeled region")
    return CoarsenResult(labels, tuple(ordered), dropped)


def coarsen(fine: LabelMap, radius: float, epsilon: float = DEFAULT_EPSILON) -> LabelMap:
    """Coarse version of a fine label map; pixels no polygon claims become UNLABELED"""
    return coarsen_with_polygons(fine, radius, epsilon).labels
