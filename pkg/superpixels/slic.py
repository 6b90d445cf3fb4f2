"""
Classic SLIC superpixels: k-means in (L, a, b, y, x) restricted to a 2S x 2S
window per center, followed by a connectivity pass.
"""

import logging
import math
from typing import Tuple, Union

import numpy as np
from scipy import ndimage

from engine.errors import ParameterError, ShapeError
from engine.tensor import FeatureMap, LabelMap
from .color import srgb_to_cielab

logger = logging.getLogger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def _grid_shape(height: int, width: int, n_superpixels: int) -> Tuple[int, int]:
    step = math.sqrt(height * width / n_superpixels)
    rows = max(1, min(height, int(math.floor(height / step + 0.5))))
    cols = max(1, min(width, int(math.floor(width / step + 0.5))))
    while rows * cols > n_superpixels:
        if rows >= cols:
            rows -= 1
        else:
            cols -= 1
    return rows, cols


def _gradient_magnitude(lab: np.ndarray) -> np.ndarray:
    padded = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode='edge')
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    return (dy * dy).sum(axis=-1) + (dx * dx).sum(axis=-1)


def _initial_centers(lab: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Grid centers moved to the lowest-gradient pixel of their 3x3 window"""
    height, width, _ = lab.shape
    gradient = _gradient_magnitude(lab)
    centers = []
    for i in range(rows):
        for j in range(cols):
            cy = int((i + 0.5) * height / rows)
            cx = int((j + 0.5) * width / cols)
            y0, y1 = max(cy - 1, 0), min(cy + 2, height)
            x0, x1 = max(cx - 1, 0), min(cx + 2, width)
            window = gradient[y0:y1, x0:x1]
            # first minimum in row-major order keeps ties deterministic
            offset = np.unravel_index(np.argmin(window), window.shape)
            y, x = y0 + offset[0], x0 + offset[1]
            centers.append(np.concatenate([lab[y, x], [y, x]]))
    return np.array(centers, dtype=np.float64)


def _assign(lab: np.ndarray, centers: np.ndarray, step: float, compactness: float) -> np.ndarray:
    height, width, _ = lab.shape
    labels = np.full((height, width), -1, dtype=np.int64)
    best = np.full((height, width), np.inf)
    ys, xs = np.mgrid[0:height, 0:width]
    spatial_weight = (compactness / step) ** 2
    reach = int(math.ceil(step))

    for k, center in enumerate(centers):
        cy, cx = int(round(center[3])), int(round(center[4]))
        y0, y1 = max(cy - reach, 0), min(cy + reach + 1, height)
        x0, x1 = max(cx - reach, 0), min(cx + reach + 1, width)
        diff = lab[y0:y1, x0:x1] - center[:3]
        d_lab = (diff * diff).sum(axis=-1)
        d_xy = (ys[y0:y1, x0:x1] - center[3]) ** 2 + (xs[y0:y1, x0:x1] - center[4]) ** 2
        distance = d_lab + spatial_weight * d_xy
        closer = distance < best[y0:y1, x0:x1]
        best[y0:y1, x0:x1][closer] = distance[closer]
        labels[y0:y1, x0:x1][closer] = k

    orphans = labels < 0
    if np.any(orphans):
        oy, ox = np.nonzero(orphans)
        d_lab = ((lab[oy, ox][:, None, :] - centers[None, :, :3]) ** 2).sum(axis=-1)
        d_xy = (oy[:, None] - centers[None, :, 3]) ** 2 + (ox[:, None] - centers[None, :, 4]) ** 2
        labels[oy, ox] = np.argmin(d_lab + spatial_weight * d_xy, axis=1)
    return labels


def _update_centers(lab: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> np.ndarray:
    height, width, _ = lab.shape
    ys, xs = np.mgrid[0:height, 0:width]
    features = np.concatenate([lab, ys[..., None], xs[..., None]], axis=-1).reshape(-1, 5)
    flat = labels.ravel()
    count = np.bincount(flat, minlength=len(centers)).astype(np.float64)
    updated = centers.copy()
    for c in range(5):
        sums = np.bincount(flat, weights=features[:, c], minlength=len(centers))
        updated[:, c] = np.where(count > 0, sums / np.maximum(count, 1.0), centers[:, c])
    return updated


def enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Merge every non-largest 4-connected piece of a label into its largest neighbor.

    Returns ids relabeled to 0..n'-1 in raster order of first appearance.
    """
    labels = labels.copy()
    for _ in range(labels.size):
        changed = False
        sizes = np.bincount(labels.ravel())
        for label in np.unique(labels):
            pieces, count = ndimage.label(labels == label, structure=FOUR_CONNECTED)
            if count <= 1:
                continue
            piece_sizes = np.bincount(pieces.ravel())[1:]
            keep = int(np.argmax(piece_sizes)) + 1
            for piece in range(1, count + 1):
                if piece == keep:
                    continue
                mask = pieces == piece
                ring = ndimage.binary_dilation(mask, structure=FOUR_CONNECTED) & ~mask
                neighbors = np.unique(labels[ring])
                neighbors = neighbors[neighbors != label]
                if neighbors.size == 0:
                    continue
                target = int(neighbors[np.argmax(sizes[neighbors])])
                labels[mask] = target
                sizes[target] += int(mask.sum())
                sizes[label] -= int(mask.sum())
                changed = True
        if not changed:
            break

    _, first, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].reshape(labels.shape)


def slic(image: Union[FeatureMap, np.ndarray], n_superpixels: int,
         compactness: float = 10.0, iterations: int = 10) -> LabelMap:
    """SLIC superpixels of an sRGB image in [0, 1].

    Returns at most n_superpixels connected superpixels with ids 0..n'-1.
    """
    data = image.data if isinstance(image, FeatureMap) else np.asarray(image, dtype=np.float64)
    if data.ndim != 3 or data.shape[-1] != 3:
        raise ShapeError(f"slic needs an (H, W, 3) sRGB image, got {data.shape}")
    height, width, _ = data.shape
    if n_superpixels < 1 or n_superpixels > height * width:
        raise ParameterError(f"n_superpixels must be in [1, {height * width}], got {n_superpixels}")
    if iterations < 1:
        raise ParameterError(f"iterations must be at least 1, got {iterations}")
    if compactness < 0:
        raise ParameterError(f"compactness must be non-negative, got {compactness}")

    lab = srgb_to_cielab(data).data
    step = math.sqrt(height * width / n_superpixels)
    rows, cols = _grid_shape(height, width, n_superpixels)
    centers = _initial_centers(lab, rows, cols)
    logger.debug(f"SLIC on {height}x{width}: {len(centers)} seeds, step {step:.2f}")

    labels = _assign(lab, centers, step, compactness)
    for _ in range(iterations - 1):
        centers = _update_centers(lab, labels, centers)
        labels = _assign(lab, centers, step, compactness)

    connected = enforce_connectivity(labels)
    logger.debug(f"SLIC produced {int(connected.max()) + 1} connected superpixels")
    return LabelMap(connected)
