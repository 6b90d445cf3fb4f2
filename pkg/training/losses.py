"""
Training objectives: masked cross-entropy, the SLIC regularizer, the
compactness term and their weighted total.

    total = ce + lambda * (slic + m * compact)

SLIC and compactness are per-pixel averages so that lambda does not depend
on the image size.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp

from engine import ops
from engine.errors import DataError, ShapeError
from engine.tensor import DTYPE, FeatureMap, LabelMap, Node, Tape
from superpixels.assignment import AssignmentPyramid
from superpixels.color import srgb_to_cielab
from superpixels.pooling import PoolingDiagnostics, q_pool

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.075


class LossConfig(BaseModel):
    """Weights of the total loss"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, allow_inf_nan=False)

    lam: float = Field(DEFAULT_LAMBDA, ge=0.0, alias="lambda")
    m: float = Field(0.0, ge=0.0)
    class_count: int = Field(2, ge=1)
    squared: bool = False


def masked_cross_entropy(logits: Node, labels: LabelMap) -> Node:
    """Mean -log softmax(logits)[label] over labeled pixels; 0 when none are labeled"""
    values = logits.value
    if values.ndim != 3:
        raise ShapeError(f"Logits must be (H, W, K), got {values.shape}")
    if values.shape[:2] != labels.shape:
        raise ShapeError(f"Logits {values.shape[:2]} and labels {labels.shape} differ in size")
    class_count = values.shape[2]
    labels.validate_classes(class_count)

    labeled = labels.labeled
    count = int(np.count_nonzero(labeled))
    if count == 0:
        return logits.tape.record(np.asarray(0.0, dtype=DTYPE), (logits,),
                                  lambda grad: (np.zeros_like(values),))

    targets = np.where(labeled, labels.ids, 0)
    log_norm = logsumexp(values, axis=-1)
    picked = np.take_along_axis(values, targets[..., None], axis=-1)[..., 0]
    per_pixel = np.where(labeled, log_norm - picked, 0.0)
    loss = np.asarray(per_pixel.ravel().sum() / count, dtype=DTYPE)

    def vjp(grad: np.ndarray):
        probabilities = np.exp(values - log_norm[..., None])
        one_hot = np.zeros_like(values)
        np.put_along_axis(one_hot, targets[..., None], 1.0, axis=-1)
        weight = np.where(labeled, float(grad) / count, 0.0)[..., None]
        return (weight * (probabilities - one_hot),)

    return logits.tape.record(loss, (logits,), vjp)


def pooled_residual_loss(features: Node, pyramid: AssignmentPyramid, squared: bool = False,
                         diagnostics: Optional[PoolingDiagnostics] = None) -> Node:
    """Mean per-pixel norm of features - q_pool(features)"""
    if features.value.shape[:2] != pyramid.image_shape:
        raise ShapeError(f"Features {features.value.shape[:2]} do not match pyramid {pyramid.image_shape}")
    residual = ops.subtract(features, q_pool(features, pyramid, diagnostics))
    return ops.mean_all(ops.pixel_norm(residual, squared=squared))


def slic_loss(image: FeatureMap, pyramid: AssignmentPyramid, squared: bool = False,
              diagnostics: Optional[PoolingDiagnostics] = None) -> Node:
    """Distance of every pixel's CIELAB color to its superpixel average.

    The image is an sRGB map in [0, 1] and enters the tape as a constant.
    """
    lab = srgb_to_cielab(image)
    return pooled_residual_loss(pyramid.levels[0].tape.constant(lab), pyramid, squared, diagnostics)


def coordinate_map(height: int, width: int) -> np.ndarray:
    """(H, W, 2) map of (y, x) pixel coordinates"""
    ys, xs = np.meshgrid(np.arange(height, dtype=DTYPE), np.arange(width, dtype=DTYPE), indexing='ij')
    return np.stack([ys, xs], axis=-1)


def compactness_term(pyramid: AssignmentPyramid, image_size: Optional[Tuple[int, int]] = None,
                     squared: bool = False) -> Node:
    """Distance of every pixel position to its superpixel's mean position"""
    height, width = image_size if image_size is not None else pyramid.image_shape
    if (height, width) != pyramid.image_shape:
        raise ShapeError(f"Image size {(height, width)} does not match pyramid {pyramid.image_shape}")
    coords = pyramid.levels[0].tape.constant(coordinate_map(height, width))
    return pooled_residual_loss(coords, pyramid, squared)


def total_loss(ce: Node, slic: Node, compact: Node, config: LossConfig) -> Node:
    """ce + lambda * (slic + m * compact)"""
    regularizer = ops.add(slic, ops.scale(compact, config.m))
    return ops.add(ce, ops.scale(regularizer, config.lam))


def zero_loss(tape: Tape) -> Node:
    return tape.constant(np.asarray(0.0, dtype=DTYPE))


def check_label_range(labels: LabelMap, class_count: int, name: str = "labels") -> None:
    try:
        labels.validate_classes(class_count)
    except DataError as exc:
        raise DataError(f"{name}: {exc}") from exc
