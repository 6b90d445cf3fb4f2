"""
Euclidean erosion of binary masks via an exact distance transform.
"""

import logging

import numpy as np
from scipy import ndimage

from engine.errors import ParameterError, ShapeError

logger = logging.getLogger(__name__)


def distance_to_unset(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance from each set pixel to the nearest unset pixel.

    Pixels outside the image count as unset.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ShapeError(f"Mask must be 2-D, got shape {mask.shape}")
    padded = np.pad(mask, 1, constant_values=False)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def erode_mask(mask: np.ndarray, radius: float) -> np.ndarray:
    """Keep a pixel iff its distance to the nearest unset pixel exceeds radius"""
    if radius < 0:
        raise ParameterError(f"Erosion radius must be non-negative, got {radius}")
    mask = np.asarray(mask, dtype=bool)
    if radius == 0:
        return mask.copy()
    return distance_to_unset(mask) > radius


def within_distance(mask: np.ndarray, distance: float) -> np.ndarray:
    """Pixels at Euclidean distance <= distance from any set pixel of mask"""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.zeros_like(mask)
    return ndimage.distance_transform_edt(~mask) <= distance
