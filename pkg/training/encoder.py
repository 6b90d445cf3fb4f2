"""
Micro encoder with a superpixel decoder.

Level 0 runs a 3x3 conv block at full resolution. Each following level
downsamples with a stride-2 3x3 conv (its output is the seed map of the
previous level) followed by another 3x3 block. A 1x1 classifier on the
coarsest features gives seed-resolution class scores, which are decoded to
full resolution through the assignment pyramid.

Assignment heads project pixel and seed features to a shared embedding and
call soft_assign; levels without a head use fixed bilinear weights.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from engine import ops
from engine.errors import DataError, ShapeError
from engine.tensor import DTYPE, FeatureMap, Node, Tape
from superpixels.assignment import (
    DEFAULT_TEMPERATURE,
    AssignmentLevel,
    AssignmentPyramid,
    bilinear_level,
    soft_assign,
)
from superpixels.grid import SeedGrid
from superpixels.pooling import decode

logger = logging.getLogger(__name__)

Registry = Dict[str, np.ndarray]

# sRGB inputs in [0, 1] are shifted to [-0.5, 0.5] before the first conv
INPUT_CENTER = 0.5


class EncoderConfig(BaseModel):
    """Shape of the toy encoder"""
    model_config = ConfigDict(frozen=True)

    levels: int = Field(3, ge=2)
    widths: Tuple[int, ...] = (8, 16, 32)
    class_count: int = Field(2, ge=1)
    learned_levels: int = Field(2, ge=0)
    embedding: int = Field(8, ge=1)
    temperature: float = Field(DEFAULT_TEMPERATURE, gt=0.0)
    in_channels: int = Field(3, ge=1)

    @model_validator(mode='after')
    def _check_widths(self) -> "EncoderConfig":
        if len(self.widths) != self.levels:
            raise ValueError(f"widths needs one entry per level ({self.levels}), got {len(self.widths)}")
        if any(w < 1 for w in self.widths):
            raise ValueError("channel widths must be positive")
        return self

    @property
    def stride(self) -> int:
        return 2 ** (self.levels - 1)

    @property
    def downsamplings(self) -> int:
        return self.levels - 1

    def learned(self, level: int) -> bool:
        """Heads sit on the last `learned_levels` downsamplings"""
        return level >= self.downsamplings - self.learned_levels


@dataclass(frozen=True)
class EncoderOutput:
    class_scores: Node
    pyramid: AssignmentPyramid
    coarse_scores: Node


def _conv_shapes(config: EncoderConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Parameter names and shapes in initialization order"""
    shapes = []
    widths = config.widths
    shapes.append(("g0.kernel", (3, 3, config.in_channels, widths[0])))
    shapes.append(("g0.bias", (widths[0],)))
    for level in range(1, config.levels):
        shapes.append((f"d{level}.kernel", (3, 3, widths[level - 1], widths[level])))
        shapes.append((f"d{level}.bias", (widths[level],)))
        shapes.append((f"g{level}.kernel", (3, 3, widths[level], widths[level])))
        shapes.append((f"g{level}.bias", (widths[level],)))
    for level in range(config.downsamplings):
        if config.learned(level):
            shapes.append((f"head{level}.pixel", (1, 1, widths[level], config.embedding)))
            shapes.append((f"head{level}.seed", (1, 1, widths[level + 1], config.embedding)))
    shapes.append(("classifier.kernel", (1, 1, widths[-1], config.class_count)))
    shapes.append(("classifier.bias", (config.class_count,)))
    return shapes


def init_params(config: EncoderConfig, seed: int = 0) -> Registry:
    """Uniform weights, zero biases.

    Convolutions followed by ReLU use the He bound sqrt(6 / fan_in); heads and
    the classifier use 1 / sqrt(fan_in).
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _conv_shapes(config):
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=DTYPE)
            continue
        fan_in = shape[0] * shape[1] * shape[2]
        gain = 6.0 if name.startswith(("g", "d")) else 1.0
        bound = np.sqrt(gain / fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape).astype(DTYPE)
    return params


class ToyEncoder:
    """Encoder + superpixel decoder over a parameter registry"""

    def __init__(self, config: EncoderConfig, params: Optional[Registry] = None, seed: int = 0):
        self.config = config
        self.params = init_params(config, seed) if params is None else dict(params)
        expected = dict(_conv_shapes(config))
        missing = sorted(set(expected) - set(self.params))
        if missing:
            raise ShapeError(f"Missing encoder parameters: {missing}")
        for name, shape in expected.items():
            if tuple(self.params[name].shape) != shape:
                raise ShapeError(f"Parameter '{name}' has shape {self.params[name].shape}, expected {shape}")

    def check_image(self, image: FeatureMap) -> None:
        stride = self.config.stride
        if image.height % stride or image.width % stride:
            raise DataError(
                f"Image {image.height}x{image.width} is not divisible by the output stride {stride}"
            )
        if image.channels != self.config.in_channels:
            raise ShapeError(f"Encoder expects {self.config.in_channels} channels, got {image.channels}")

    def register(self, tape: Tape) -> Dict[str, Node]:
        return {name: tape.parameter(name, value) for name, value in self.params.items()}

    def forward(self, tape: Tape, image: FeatureMap, nodes: Optional[Dict[str, Node]] = None) -> EncoderOutput:
        """Build the forward graph; `nodes` reuses parameters already on the tape"""
        self.check_image(image)
        nodes = self.register(tape) if nodes is None else nodes
        config = self.config

        def block(x: Node, prefix: str, stride: int = 1) -> Node:
            out = ops.conv2d(x, nodes[f"{prefix}.kernel"], stride=stride, padding=1)
            return ops.relu(ops.add_bias(out, nodes[f"{prefix}.bias"]))

        features = block(tape.constant(image.data - INPUT_CENTER), "g0")
        levels: List[AssignmentLevel] = []
        for level in range(1, config.levels):
            seeds = block(features, f"d{level}", stride=2)
            below = level - 1
            if config.learned(below):
                pixel_embed = ops.conv2d(features, nodes[f"head{below}.pixel"])
                seed_embed = ops.conv2d(seeds, nodes[f"head{below}.seed"])
                levels.append(soft_assign(pixel_embed, seed_embed, config.temperature, level=below))
            else:
                grid = SeedGrid(features.value.shape[0], features.value.shape[1], below)
                levels.append(bilinear_level(tape, grid))
            features = block(seeds, f"g{level}")

        coarse = ops.add_bias(ops.conv2d(features, nodes["classifier.kernel"]), nodes["classifier.bias"])
        pyramid = AssignmentPyramid(tuple(levels))
        return EncoderOutput(decode(coarse, pyramid), pyramid, coarse)

