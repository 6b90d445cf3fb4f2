"""
Pixel accuracy and boundary recall for label maps.

Boundary recall follows the neighborhood formula

    BR = n(b(pred, 0) & b(truth, r)) / (n(b(pred, 0) & b(truth, r)) + n(b(truth, 0) - b(pred, r)))

where b(y, r) is the set of pixels within a (2r+1) x (2r+1) square of a
boundary pixel of y. UNLABELED participates as an ordinary id.
"""

import hashlib
import json
import logging
import math
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from engine.errors import DataError, ParameterError, ShapeError
from engine.tensor import LabelMap, UNLABELED

logger = logging.getLogger(__name__)

AUTO = "auto"
DIAGONAL_FACTOR = 0.0025
BR_VARIANTS = ("two_sided", "standard")

LabelInput = Union[LabelMap, np.ndarray]


class MetricsReport(BaseModel):
    """Per-image (or aggregate) evaluation result"""
    model_config = ConfigDict(frozen=True)

    pixel_accuracy: float = Field(ge=0.0, le=1.0)
    boundary_recall: float = Field(ge=0.0, le=1.0)
    r_used: int = Field(ge=0)
    evaluated_pixels: int = Field(ge=0)
    seed: Optional[int] = None
    config_hash: Optional[str] = None
    image: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(self.model_dump(exclude_none=False), sort_keys=False)


def _ids(labels: LabelInput) -> np.ndarray:
    return labels.ids if isinstance(labels, LabelMap) else np.asarray(labels)


def _check_same_shape(pred: np.ndarray, truth: np.ndarray) -> None:
    if pred.shape != truth.shape:
        raise ShapeError(f"Prediction {pred.shape} and truth {truth.shape} differ in size")


def auto_radius(height: int, width: int) -> int:
    """0.0025 times the image diagonal, rounded half up"""
    return int(math.floor(DIAGONAL_FACTOR * math.hypot(height, width) + 0.5))


def resolve_radius(r: Union[int, str, None], height: int, width: int) -> int:
    if r is None or (isinstance(r, str) and r.lower() == AUTO):
        return auto_radius(height, width)
    radius = int(r)
    if radius < 0:
        raise ParameterError(f"Boundary radius must be non-negative, got {r}")
    return radius


def pixel_accuracy(pred: LabelInput, truth: LabelInput) -> float:
    """Correct labeled pixels over labeled pixels; a pred of UNLABELED counts as a miss"""
    pred_ids, truth_ids = _ids(pred), _ids(truth)
    _check_same_shape(pred_ids, truth_ids)
    labeled = truth_ids != UNLABELED
    evaluated = int(np.count_nonzero(labeled))
    if evaluated == 0:
        raise DataError("Pixel accuracy is undefined: truth has no labeled pixels")
    return float(np.count_nonzero((pred_ids == truth_ids) & labeled)) / evaluated


def boundary_pixels(labels: LabelInput) -> np.ndarray:
    """Mask of pixels with at least one 4-neighbor carrying a different id"""
    ids = _ids(labels)
    boundary = np.zeros(ids.shape, dtype=bool)
    vertical = ids[1:, :] != ids[:-1, :]
    horizontal = ids[:, 1:] != ids[:, :-1]
    boundary[1:, :] |= vertical
    boundary[:-1, :] |= vertical
    boundary[:, 1:] |= horizontal
    boundary[:, :-1] |= horizontal
    return boundary


def dilate_set(pixels: np.ndarray, r: int) -> np.ndarray:
    """Union of (2r+1) x (2r+1) squares around the members, clipped to the image"""
    if r < 0:
        raise ParameterError(f"Dilation radius must be non-negative, got {r}")
    pixels = np.asarray(pixels, dtype=bool)
    if r == 0 or not pixels.any():
        return pixels.copy()
    return ndimage.binary_dilation(pixels, structure=np.ones((2 * r + 1, 2 * r + 1), dtype=bool))


def boundary_recall(pred: LabelInput, truth: LabelInput,
                    r: Union[int, str, None] = AUTO, variant: str = "two_sided") -> float:
    """Boundary recall of pred against truth.

    variant="two_sided" evaluates the neighborhood formula in the module docstring;
    variant="standard" is n(b(truth, 0) & b(pred, r)) / n(b(truth, 0)).
    """
    if variant not in BR_VARIANTS:
        raise ParameterError(f"Unknown boundary recall variant '{variant}', expected one of {BR_VARIANTS}")
    pred_ids, truth_ids = _ids(pred), _ids(truth)
    _check_same_shape(pred_ids, truth_ids)
    radius = resolve_radius(r, *truth_ids.shape)

    truth_boundary = boundary_pixels(truth_ids)
    truth_count = int(np.count_nonzero(truth_boundary))
    if truth_count == 0:
        raise DataError("Boundary recall is undefined: truth has no boundary pixels")
    pred_boundary = boundary_pixels(pred_ids)

    if variant == "standard":
        hits = np.count_nonzero(truth_boundary & dilate_set(pred_boundary, radius))
        return float(hits) / truth_count

    matched = int(np.count_nonzero(pred_boundary & dilate_set(truth_boundary, radius)))
    missed = int(np.count_nonzero(truth_boundary & ~dilate_set(pred_boundary, radius)))
    if matched + missed == 0:
        return 0.0
    return matched / (matched + missed)


def config_hash(config: Dict[str, Any]) -> str:
    """Short stable hash of a configuration mapping"""
    encoded = json.dumps(config, sort_keys=True, default=str).encode('utf-8')
    return hashlib.sha256(encoded).hexdigest()[:12]


def evaluate_pair(pred: LabelInput, truth: LabelInput, r: Union[int, str, None] = AUTO,
                  seed: Optional[int] = None, config: Optional[Dict[str, Any]] = None,
                  image: Optional[str] = None, variant: str = "two_sided") -> MetricsReport:
    """Pixel accuracy and boundary recall of one prediction"""
    truth_ids = _ids(truth)
    radius = resolve_radius(r, *truth_ids.shape)
    return MetricsReport(
        pixel_accuracy=pixel_accuracy(pred, truth),
        boundary_recall=boundary_recall(pred, truth, radius, variant),
        r_used=radius,
        evaluated_pixels=int(np.count_nonzero(truth_ids != UNLABELED)),
        seed=seed,
        config_hash=config_hash(config) if config is not None else None,
        image=image,
    )


def aggregate_reports(reports: Iterable[MetricsReport]) -> MetricsReport:
    """Mean accuracy and recall over reports (in the given order)"""
    reports: List[MetricsReport] = list(reports)
    if not reports:
        raise DataError("Cannot aggregate an empty list of reports")
    first = reports[0]
    return MetricsReport(
        pixel_accuracy=float(np.mean([r.pixel_accuracy for r in reports])),
        boundary_recall=float(np.mean([r.boundary_recall for r in reports])),
        r_used=max(r.r_used for r in reports),
        evaluated_pixels=sum(r.evaluated_pixels for r in reports),
        seed=first.seed,
        config_hash=first.config_hash,
        image="aggregate",
    )
