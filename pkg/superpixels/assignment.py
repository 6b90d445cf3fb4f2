"""
Soft pixel-to-seed assignments (one level per downsampling) and their pyramid.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from engine import ops
from engine.errors import ParameterError, ShapeError
from engine.tensor import DTYPE, LabelMap, Node, Tape
from .grid import CANDIDATE_OFFSETS, CENTER_SLOT, SeedGrid

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 1.0


@dataclass(frozen=True)
class AssignmentLevel:
    """Row-stochastic (H, W, 9) weights mapping a level's pixels to candidate seeds"""
    grid: SeedGrid
    weights: Node

    def __post_init__(self):
        expected = (self.grid.height, self.grid.width, 9)
        if self.weights.value.shape != expected:
            raise ShapeError(f"Assignment weights {self.weights.value.shape} do not match grid {expected}")

    @property
    def array(self) -> np.ndarray:
        return self.weights.value

    @property
    def tape(self) -> Tape:
        return self.weights.tape


@dataclass(frozen=True)
class AssignmentPyramid:
    """Assignment levels ordered finest first"""
    levels: Tuple[AssignmentLevel, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ShapeError("An assignment pyramid needs at least one level")
        for finer, coarser in zip(levels, levels[1:]):
            if (finer.grid.seed_height, finer.grid.seed_width) != (coarser.grid.height, coarser.grid.width):
                raise ShapeError(
                    f"Level {finer.grid.level} seed grid {finer.grid.seed_height}x{finer.grid.seed_width} "
                    f"does not match level {coarser.grid.level} pixels {coarser.grid.height}x{coarser.grid.width}"
                )
        object.__setattr__(self, 'levels', levels)

    @property
    def finest(self) -> SeedGrid:
        return self.levels[0].grid

    @property
    def coarsest(self) -> SeedGrid:
        return self.levels[-1].grid

    @property
    def image_shape(self) -> Tuple[int, int]:
        return self.finest.height, self.finest.width

    @property
    def seed_shape(self) -> Tuple[int, int]:
        return self.coarsest.seed_height, self.coarsest.seed_width

    def __len__(self) -> int:
        return len(self.levels)


def candidate_sq_distances(pixel_features: Node, seed_features: Node, grid: SeedGrid) -> Node:
    """(H, W, 9) squared Euclidean distance from each pixel to each candidate seed"""
    grid.check_pixels(pixel_features.value, "pixel features")
    grid.check_seeds(seed_features.value, "seed features")
    if pixel_features.value.shape[-1] != seed_features.value.shape[-1]:
        raise ShapeError(
            f"Pixel features have {pixel_features.value.shape[-1]} channels, "
            f"seed features {seed_features.value.shape[-1]}"
        )

    valid = grid.valid
    diff = pixel_features.value[:, :, None, :] - grid.gather(seed_features.value)
    distances = np.where(valid, (diff * diff).sum(axis=-1), 0.0)

    def vjp(grad: np.ndarray):
        weighted = 2.0 * np.where(valid, grad, 0.0)[..., None] * diff
        return weighted.sum(axis=2), -grid.scatter(weighted)

    return pixel_features.tape.record(distances, (pixel_features, seed_features), vjp)


def assignment_from_logits(logits: Node, grid: SeedGrid) -> AssignmentLevel:
    """Normalize raw (H, W, 9) logits over each pixel's valid candidates"""
    grid.check_pixels(logits.value, "assignment logits")
    return AssignmentLevel(grid, ops.softmax_candidates(logits, grid.valid))


def soft_assign(pixel_features: Node, seed_features: Node,
                temperature: float = DEFAULT_TEMPERATURE, level: int = 0) -> AssignmentLevel:
    """Weights proportional to exp(-|x_p - s_c|^2 / temperature) over valid candidates"""
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    height, width = pixel_features.value.shape[:2]
    grid = SeedGrid(height, width, level)
    distances = candidate_sq_distances(pixel_features, seed_features, grid)
    return assignment_from_logits(ops.scale(distances, -1.0 / temperature), grid)


def _constant_level(tape: Tape, grid: SeedGrid, weights: np.ndarray) -> AssignmentLevel:
    weights = np.where(grid.valid, weights, 0.0)
    weights = weights / weights.sum(axis=-1, keepdims=True)
    return AssignmentLevel(grid, tape.constant(weights))


def nearest_level(tape: Tape, grid: SeedGrid) -> AssignmentLevel:
    """One-hot on each pixel's own parent seed"""
    weights = np.zeros((grid.height, grid.width, 9), dtype=DTYPE)
    weights[..., CENTER_SLOT] = 1.0
    return _constant_level(tape, grid, weights)


def bilinear_level(tape: Tape, grid: SeedGrid) -> AssignmentLevel:
    """Fixed bilinear interpolation weights over the candidate seeds.

    Seed s covers pixels 2s and 2s+1, so its center is at 2s + 0.5 in pixel
    units; the weight per axis is max(0, 1 - |p - c| / 2).
    """
    ys = np.arange(grid.height, dtype=DTYPE)[:, None, None]
    xs = np.arange(grid.width, dtype=DTYPE)[None, :, None]
    dy = np.array([o[0] for o in CANDIDATE_OFFSETS])[None, None, :]
    dx = np.array([o[1] for o in CANDIDATE_OFFSETS])[None, None, :]
    center_y = 2.0 * (np.arange(grid.height)[:, None, None] // 2 + dy) + 0.5
    center_x = 2.0 * (np.arange(grid.width)[None, :, None] // 2 + dx) + 0.5
    wy = np.clip(1.0 - np.abs(ys - center_y) / 2.0, 0.0, None)
    wx = np.clip(1.0 - np.abs(xs - center_x) / 2.0, 0.0, None)
    return _constant_level(tape, grid, wy * wx)


def uniform_level(tape: Tape, grid: SeedGrid) -> AssignmentLevel:
    return _constant_level(tape, grid, np.ones((grid.height, grid.width, 9), dtype=DTYPE))


def constant_pyramid(tape: Tape, height: int, width: int, levels: int, kind: str = "nearest") -> AssignmentPyramid:
    """Pyramid of fixed levels ('nearest', 'bilinear' or 'uniform')"""
    builders = {'nearest': nearest_level, 'bilinear': bilinear_level, 'uniform': uniform_level}
    if kind not in builders:
        raise ParameterError(f"Unknown fixed assignment kind '{kind}'")
    grid = SeedGrid(height, width, 0)
    built = []
    for _ in range(levels):
        built.append(builders[kind](tape, grid))
        grid = grid.child()
    return AssignmentPyramid(tuple(built))


def pyramid_from_arrays(tape: Tape, arrays: Sequence[np.ndarray]) -> AssignmentPyramid:
    """Wrap precomputed (H, W, 9) weight arrays as constant levels"""
    built = []
    for level, weights in enumerate(arrays):
        weights = np.asarray(weights, dtype=DTYPE)
        grid = SeedGrid(weights.shape[0], weights.shape[1], level)
        built.append(AssignmentLevel(grid, tape.constant(np.where(grid.valid, weights, 0.0))))
    return AssignmentPyramid(tuple(built))


def hard_labels(pyramid: AssignmentPyramid) -> LabelMap:
    """Superpixel id per finest pixel by following argmax assignments to the coarsest seeds.

    Ties go to the lowest slot index; the id is the final seed's linear index.
    """
    height, width = pyramid.image_shape
    ids = np.arange(height * width)
    for level in pyramid.levels:
        grid = level.grid
        flat_weights = np.where(grid.valid, level.array, -1.0).reshape(-1, 9)
        best_slot = np.argmax(flat_weights, axis=1)
        best_seed = grid.candidate_index.reshape(-1, 9)[np.arange(flat_weights.shape[0]), best_slot]
        ids = best_seed[ids]
    return LabelMap(ids.reshape(height, width))
