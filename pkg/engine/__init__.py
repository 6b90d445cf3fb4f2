"""
Dense feature maps and the reverse-mode tape used by training.
"""

from .errors import (
    SpixError,
    ShapeError,
    GeometryError,
    DataError,
    ParameterError,
    NumericalError,
    exit_code_for,
)
from .tensor import FeatureMap, LabelMap, Node, Tape, UNLABELED
from .gradcheck import GradientCheckResult, gradient_check
from . import ops

__all__ = [
    # Errors
    "SpixError",
    "ShapeError",
    "GeometryError",
    "DataError",
    "ParameterError",
    "NumericalError",
    "exit_code_for",

    # Core types
    "FeatureMap",
    "LabelMap",
    "UNLABELED",
    "Node",
    "Tape",

    # Verification
    "GradientCheckResult",
    "gradient_check",

    "ops",
]
