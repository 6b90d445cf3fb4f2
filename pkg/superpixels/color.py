"""
sRGB to CIELAB conversion (D65 white point, 2 degree observer).
"""

import logging
from typing import Union

import numpy as np

from engine.errors import ShapeError
from engine.tensor import DTYPE, FeatureMap

logger = logging.getLogger(__name__)

# IEC 61966-2-1 sRGB primaries -> CIE XYZ
SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
], dtype=DTYPE)

_DELTA = 6.0 / 29.0


def srgb_to_linear(values: np.ndarray) -> np.ndarray:
    """Undo the sRGB transfer curve (threshold 0.04045)"""
    values = np.asarray(values, dtype=DTYPE)
    return np.where(values <= 0.04045, values / 12.92, ((values + 0.055) / 1.055) ** 2.4)


def linear_to_xyz(linear: np.ndarray) -> np.ndarray:
    return np.einsum('...j,ij->...i', linear, SRGB_TO_XYZ)


# White is taken from the same matrix path so sRGB white lands exactly on it
D65_WHITE = linear_to_xyz(np.ones(3, dtype=DTYPE))


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3.0 * _DELTA ** 2) + 4.0 / 29.0)


def xyz_to_lab(xyz: np.ndarray) -> np.ndarray:
    ratios = xyz / D65_WHITE
    fx, fy, fz = _lab_f(ratios[..., 0]), _lab_f(ratios[..., 1]), _lab_f(ratios[..., 2])
    lightness = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    return np.stack([lightness, a, b], axis=-1)


def srgb_to_cielab(image: Union[FeatureMap, np.ndarray]) -> FeatureMap:
    """Convert an sRGB map with values in [0, 1] into (L, a, b) channels.

    8-bit data must be divided by 255 first. Lab channels are returned
    unscaled.
    """
    data = image.data if isinstance(image, FeatureMap) else np.asarray(image, dtype=DTYPE)
    if data.ndim != 3 or data.shape[-1] != 3:
        raise ShapeError(f"srgb_to_cielab needs 3 channels, got shape {data.shape}")
    return FeatureMap(xyz_to_lab(linear_to_xyz(srgb_to_linear(data))))
