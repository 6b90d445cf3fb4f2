"""
Superpixel pooling through an assignment pyramid.

Downsampling is the per-seed weighted average of the pixels assigned to it
(column-normalized); upsampling is the per-pixel mixture of its candidate
seeds (row-stochastic). q_pool composes both, decode only upsamples.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from engine.errors import ShapeError
from engine.tensor import Node
from .assignment import AssignmentLevel, AssignmentPyramid

logger = logging.getLogger(__name__)

EMPTY_SEED_MASS = 1e-12


@dataclass
class PoolingDiagnostics:
    """Counts seeds that received (numerically) no assignment mass"""
    empty_seeds: int = 0
    downsample_calls: int = 0


def sp_downsample(x: Node, level: AssignmentLevel,
                  diagnostics: Optional[PoolingDiagnostics] = None) -> Node:
    """Seed feature = sum_p w(p->s) x_p / sum_p w(p->s); empty seeds get 0"""
    grid = level.grid
    grid.check_pixels(x.value, "downsample input")
    if x.value.ndim != 3:
        raise ShapeError(f"Feature map must be (H, W, C), got {x.value.shape}")

    weights = level.array
    features = x.value
    numerator = grid.scatter(weights[..., None] * features[:, :, None, :])
    mass = grid.scatter(weights[..., None])
    filled = mass > EMPTY_SEED_MASS
    safe_mass = np.where(filled, mass, 1.0)
    out = np.where(filled, numerator / safe_mass, 0.0)

    empty = int(np.count_nonzero(~filled))
    if diagnostics is not None:
        diagnostics.downsample_calls += 1
        diagnostics.empty_seeds += empty
    if empty:
        logger.debug(f"Level {grid.level}: {empty} seed(s) without assignment mass set to 0")

    def vjp(grad: np.ndarray):
        grad_num = np.where(filled, grad / safe_mass, 0.0)
        grad_mass = -(grad_num * out).sum(axis=-1, keepdims=True)
        gathered_num = grid.gather(grad_num)
        grad_x = np.einsum('hwk,hwkc->hwc', weights, gathered_num)
        grad_w = (gathered_num * features[:, :, None, :]).sum(axis=-1) + grid.gather(grad_mass)[..., 0]
        return grad_x, np.where(grid.valid, grad_w, 0.0)

    return x.tape.record(out, (x, level.weights), vjp)


def sp_upsample(y: Node, level: AssignmentLevel) -> Node:
    """Pixel value = sum_c w(p->c) y_c over the candidate seeds"""
    grid = level.grid
    if y.value.ndim != 3:
        raise ShapeError(f"Seed map must be (Hs, Ws, C), got {y.value.shape}")
    grid.check_seeds(y.value, "upsample input")

    weights = level.array
    gathered = grid.gather(y.value)
    out = np.einsum('hwk,hwkc->hwc', weights, gathered)

    def vjp(grad: np.ndarray):
        grad_w = np.where(grid.valid, np.einsum('hwc,hwkc->hwk', grad, gathered), 0.0)
        grad_y = grid.scatter(weights[..., None] * grad[:, :, None, :])
        return grad_y, grad_w

    return y.tape.record(out, (y, level.weights), vjp)


def q_pool(x: Node, pyramid: AssignmentPyramid,
           diagnostics: Optional[PoolingDiagnostics] = None) -> Node:
    """Replace every pixel by the weighted average feature of its superpixels"""
    pooled = x
    for level in pyramid.levels:
        pooled = sp_downsample(pooled, level, diagnostics)
    for level in reversed(pyramid.levels):
        pooled = sp_upsample(pooled, level)
    return pooled


def decode(y_coarse: Node, pyramid: AssignmentPyramid) -> Node:
    """Upsample coarsest class scores to full resolution through every level"""
    out = y_coarse
    for level in reversed(pyramid.levels):
        out = sp_upsample(out, level)
    return out
