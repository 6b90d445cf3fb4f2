"""
Seed-grid geometry for the nine-candidate assignment.

A level with H x W pixels owns a ceil(H/2) x ceil(W/2) seed grid. Pixel
(y, x) may join seed (y//2 + dy, x//2 + dx) for dy, dx in {-1, 0, 1};
slots are numbered (dy, dx) row-major so slot 4 is the pixel's own parent
seed. Candidates falling off the grid are invalid.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import numpy as np

from engine.errors import GeometryError, ShapeError
from engine.tensor import DTYPE

logger = logging.getLogger(__name__)

CANDIDATE_OFFSETS: Tuple[Tuple[int, int], ...] = tuple(
    (dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
)
CENTER_SLOT = 4


@dataclass(frozen=True)
class SeedGrid:
    """Pixel dimensions of one pyramid level and the seed grid above it"""
    height: int
    width: int
    level: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise GeometryError(f"Level dimensions must be positive, got {self.height}x{self.width}")

    @property
    def seed_height(self) -> int:
        return (self.height + 1) // 2

    @property
    def seed_width(self) -> int:
        return (self.width + 1) // 2

    @property
    def seed_count(self) -> int:
        return self.seed_height * self.seed_width

    @cached_property
    def _tables(self) -> Tuple[np.ndarray, np.ndarray]:
        ys = np.arange(self.height)[:, None, None]
        xs = np.arange(self.width)[None, :, None]
        dy = np.array([o[0] for o in CANDIDATE_OFFSETS])[None, None, :]
        dx = np.array([o[1] for o in CANDIDATE_OFFSETS])[None, None, :]
        sy = ys // 2 + dy
        sx = xs // 2 + dx
        valid = (sy >= 0) & (sy < self.seed_height) & (sx >= 0) & (sx < self.seed_width)
        index = np.where(valid, sy * self.seed_width + sx, 0)
        valid.setflags(write=False)
        index.setflags(write=False)
        return index, valid

    @property
    def candidate_index(self) -> np.ndarray:
        """(H, W, 9) linear seed index per slot; 0 where the slot is invalid"""
        return self._tables[0]

    @property
    def valid(self) -> np.ndarray:
        """(H, W, 9) boolean mask of slots that fall on the seed grid"""
        return self._tables[1]

    def child(self) -> "SeedGrid":
        """Grid of the next coarser level (its pixels are this grid's seeds)"""
        return SeedGrid(self.seed_height, self.seed_width, self.level + 1)

    def check_pixels(self, array: np.ndarray, what: str = "pixel map") -> None:
        if array.shape[:2] != (self.height, self.width):
            raise ShapeError(f"{what} is {array.shape[:2]}, level {self.level} expects {(self.height, self.width)}")

    def check_seeds(self, array: np.ndarray, what: str = "seed map") -> None:
        if array.shape[:2] != (self.seed_height, self.seed_width):
            raise ShapeError(
                f"{what} is {array.shape[:2]}, level {self.level} seed grid is "
                f"{(self.seed_height, self.seed_width)}"
            )

    def gather(self, seed_values: np.ndarray) -> np.ndarray:
        """(Hs, Ws, C) seed values -> (H, W, 9, C) candidate values, 0 on invalid slots"""
        self.check_seeds(seed_values)
        flat = seed_values.reshape(self.seed_count, -1)
        gathered = flat[self.candidate_index]
        return np.where(self.valid[..., None], gathered, 0.0)

    def scatter(self, values: np.ndarray) -> np.ndarray:
        """(H, W, 9, C) per-slot contributions -> (Hs, Ws, C) per-seed sums.

        Invalid slots are ignored; accumulation runs in row-major pixel order.
        """
        channels = values.shape[-1]
        valid = self.valid
        targets = self.candidate_index[valid]
        contributions = values[valid]
        out = np.empty((self.seed_count, channels), dtype=DTYPE)
        for c in range(channels):
            out[:, c] = np.bincount(targets, weights=contributions[:, c], minlength=self.seed_count)
        return out.reshape(self.seed_height, self.seed_width, channels)


def pyramid_grids(height: int, width: int, levels: int) -> List[SeedGrid]:
    """Grids of a pyramid with `levels` assignment levels, finest first"""
    grids = [SeedGrid(height, width, 0)]
    for _ in range(levels - 1):
        grids.append(grids[-1].child())
    return grids


def candidate_seeds(pixel: Tuple[int, int], grid: SeedGrid) -> List[Tuple[Tuple[int, int], int]]:
    """Valid ((seed_y, seed_x), slot) pairs of a pixel, in slot order"""
    y, x = pixel
    if not (0 <= y < grid.height and 0 <= x < grid.width):
        raise GeometryError(f"Pixel {pixel} outside level {grid.level} bounds {grid.height}x{grid.width}")
    seeds = []
    for slot, (dy, dx) in enumerate(CANDIDATE_OFFSETS):
        sy, sx = y // 2 + dy, x // 2 + dx
        if 0 <= sy < grid.seed_height and 0 <= sx < grid.seed_width:
            seeds.append(((sy, sx), slot))
    return seeds
