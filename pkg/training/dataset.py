"""
Synthetic segmentation corpus: flat-colored convex polygons on a
background, with exact fine labels and optional coarse versions.
"""

import colorsys
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from annotations.coarsen import DEFAULT_EPSILON, coarsen, unlabeled_fraction
from annotations.polygons import Polygon, polygon_mask
from engine.errors import DataError, ParameterError
from engine.tensor import DTYPE, FeatureMap, LabelMap

logger = logging.getLogger(__name__)

NOISE_SIGMA = 0.02
MAX_SHAPES = 4
COLOR_JITTER = 0.04


@dataclass(frozen=True)
class Sample:
    """One image with its training labels (fine unless coarsened)"""
    name: str
    image: FeatureMap
    labels: LabelMap
    fine_labels: Optional[LabelMap] = None
    palette: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.image.height, self.image.width) != self.labels.shape:
            raise DataError(
                f"Sample '{self.name}': image {self.image.height}x{self.image.width} "
                f"and labels {self.labels.shape[0]}x{self.labels.shape[1]} differ in size"
            )

    @property
    def truth(self) -> LabelMap:
        """Fine labels when known, else the training labels"""
        return self.fine_labels if self.fine_labels is not None else self.labels


def base_palette(classes: int) -> np.ndarray:
    """Evenly spaced hues; class 0 is a dark gray background"""
    colors = [(0.15, 0.15, 0.15)]
    for k in range(1, classes):
        hue = (k - 1) / max(classes - 1, 1)
        colors.append(colorsys.hsv_to_rgb(hue, 0.75, 0.9))
    return np.array(colors, dtype=DTYPE)


def _convex_polygon(rng: np.random.Generator, class_id: int, height: int, width: int) -> Polygon:
    center_x = rng.uniform(0.2, 0.8) * width
    center_y = rng.uniform(0.2, 0.8) * height
    radius_x = rng.uniform(0.12, 0.35) * width
    radius_y = rng.uniform(0.12, 0.35) * height
    count = int(rng.integers(3, 9))
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=count))
    # points on an ellipse in angular order form a convex polygon
    vertices = tuple((center_x + radius_x * np.cos(a), center_y + radius_y * np.sin(a)) for a in angles)
    return Polygon(class_id, vertices)


def synth_sample(rng: np.random.Generator, size: Tuple[int, int], classes: int, name: str) -> Sample:
    height, width = size
    palette = np.clip(base_palette(classes) + rng.uniform(-COLOR_JITTER, COLOR_JITTER, size=(classes, 3)), 0.0, 1.0)

    ids = np.zeros((height, width), dtype=np.int64)
    # every image carries at least one foreground pixel
    while not ids.any():
        for _ in range(int(rng.integers(1, MAX_SHAPES + 1))):
            class_id = int(rng.integers(1, classes))
            polygon = _convex_polygon(rng, class_id, height, width)
            ids[polygon_mask(polygon, size)] = class_id

    image = palette[ids] + rng.normal(0.0, NOISE_SIGMA, size=(height, width, 3))
    labels = LabelMap(ids)
    return Sample(name, FeatureMap(np.clip(image, 0.0, 1.0)), labels, labels, palette)


def synth_dataset(count: int, size: Tuple[int, int], classes: int, seed: int = 0) -> List[Sample]:
    """Deterministic corpus of `count` images; every pixel carries a class"""
    if classes < 2:
        raise ParameterError(f"Need at least 2 classes, got {classes}")
    if count < 0:
        raise ParameterError(f"count must be non-negative, got {count}")
    height, width = size
    if height < 4 or width < 4:
        raise ParameterError(f"Image size {height}x{width} is too small")
    rng = np.random.default_rng(seed)
    samples = [synth_sample(rng, (height, width), classes, f"{index:04d}") for index in range(count)]
    logger.debug(f"Synthesized {count} images of {height}x{width} with {classes} classes (seed {seed})")
    return samples


def coarsen_dataset(samples: Sequence[Sample], radius: float, epsilon: float = DEFAULT_EPSILON) -> List[Sample]:
    """Replace every sample's training labels by a coarse version of its fine labels"""
    coarse = []
    for sample in samples:
        labels = coarsen(sample.truth, radius, epsilon)
        coarse.append(replace(sample, labels=labels, fine_labels=sample.truth))
    if coarse:
        mean_unlabeled = float(np.mean([unlabeled_fraction(s.labels) for s in coarse]))
        logger.info(f"Coarsened {len(coarse)} label maps (radius {radius}, epsilon {epsilon}): "
                    f"{mean_unlabeled:.1%} unlabeled on average")
    return coarse


def split_dataset(samples: Sequence[Sample], counts: Sequence[int]) -> List[List[Sample]]:
    """Consecutive splits of the given sizes"""
    if sum(counts) > len(samples):
        raise ParameterError(f"Split sizes {list(counts)} exceed {len(samples)} samples")
    splits, start = [], 0
    for size in counts:
        splits.append(list(samples[start:start + size]))
        start += size
    return splits
