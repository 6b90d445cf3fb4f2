"""
Superpixel machinery: CIELAB features, nine-candidate seed grids, soft
assignment pyramids, differentiable pooling/decoding and a classic SLIC
reference implementation.
"""

from .color import srgb_to_cielab
from .grid import SeedGrid, candidate_seeds, pyramid_grids, CANDIDATE_OFFSETS, CENTER_SLOT
from .assignment import (
    AssignmentLevel,
    AssignmentPyramid,
    assignment_from_logits,
    bilinear_level,
    constant_pyramid,
    hard_labels,
    nearest_level,
    pyramid_from_arrays,
    soft_assign,
    uniform_level,
)
from .pooling import PoolingDiagnostics, decode, q_pool, sp_downsample, sp_upsample
from .slic import enforce_connectivity, slic

__all__ = [
    # Color
    "srgb_to_cielab",

    # Geometry
    "SeedGrid",
    "candidate_seeds",
    "pyramid_grids",
    "CANDIDATE_OFFSETS",
    "CENTER_SLOT",

    # Assignments
    "AssignmentLevel",
    "AssignmentPyramid",
    "assignment_from_logits",
    "bilinear_level",
    "constant_pyramid",
    "hard_labels",
    "nearest_level",
    "pyramid_from_arrays",
    "soft_assign",
    "uniform_level",

    # Pooling
    "PoolingDiagnostics",
    "decode",
    "q_pool",
    "sp_downsample",
    "sp_upsample",

    # Reference SLIC
    "enforce_connectivity",
    "slic",
]
