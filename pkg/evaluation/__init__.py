"""
Segmentation metrics and run-comparison statistics.
"""

from .metrics import (
    AUTO,
    MetricsReport,
    aggregate_reports,
    auto_radius,
    boundary_pixels,
    boundary_recall,
    config_hash,
    dilate_set,
    evaluate_pair,
    pixel_accuracy,
    resolve_radius,
)
from .significance import ALPHA, MannWhitneyResult, mann_whitney_one_sided, mean_std

__all__ = [
    "AUTO",
    "MetricsReport",
    "aggregate_reports",
    "auto_radius",
    "boundary_pixels",
    "boundary_recall",
    "config_hash",
    "dilate_set",
    "evaluate_pair",
    "pixel_accuracy",
    "resolve_radius",
    "ALPHA",
    "MannWhitneyResult",
    "mann_whitney_one_sided",
    "mean_std",
]
