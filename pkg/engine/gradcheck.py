"""
Central-difference gradient verification harness.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .errors import NumericalError, ParameterError
from .tensor import DTYPE, Node, Tape

logger = logging.getLogger(__name__)

# Builds the scalar loss on a fresh tape from the given parameter nodes.
LossBuilder = Callable[[Tape, Dict[str, Node]], Node]


@dataclass(frozen=True)
class GradientCheckResult:
    """Outcome of a finite-difference comparison"""
    passed: bool
    max_relative_error: float
    checked: int
    message: str
    worst: Optional[Tuple[str, Tuple[int, ...]]] = None


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def evaluate(function: LossBuilder, params: Dict[str, np.ndarray]) -> Tuple[float, Dict[str, np.ndarray]]:
    """Run one forward/backward pass; returns (loss, gradients)"""
    tape = Tape()
    nodes = {name: tape.parameter(name, value) for name, value in params.items()}
    loss = function(tape, nodes)
    return loss.item(), tape.backward(loss)


def gradient_check(function: LossBuilder,
                   params: Dict[str, np.ndarray],
                   epsilon: float = 1e-4,
                   samples: Optional[int] = None,
                   tolerance: float = 1e-4,
                   seed: int = 0) -> GradientCheckResult:
    """Compare analytic gradients with central differences.

    With `samples` set, that many coordinates are drawn at random over all
    parameters; otherwise every coordinate is checked.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")

    base = {name: np.array(value, dtype=DTYPE, copy=True) for name, value in params.items()}
    try:
        _, analytic = evaluate(function, base)
    except NumericalError as e:
        return GradientCheckResult(False, float('inf'), 0, f"Non-finite value at the base point: {e}")

    coordinates = [(name, index) for name, value in base.items() for index in np.ndindex(value.shape)]
    if samples is not None and samples < len(coordinates):
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coordinates), size=samples, replace=False)
        coordinates = [coordinates[i] for i in sorted(picks)]

    worst_error = 0.0
    worst = None
    for name, index in coordinates:
        original = base[name][index]
        try:
            base[name][index] = original + epsilon
            plus, _ = evaluate(function, base)
            base[name][index] = original - epsilon
            minus, _ = evaluate(function, base)
        except NumericalError:
            plus = minus = float('nan')
        finally:
            base[name][index] = original

        if not (np.isfinite(plus) and np.isfinite(minus)):
            return GradientCheckResult(False, float('inf'), len(coordinates),
                                       f"Non-finite function value at {name}{index}", (name, index))

        numeric = (plus - minus) / (2.0 * epsilon)
        error = relative_error(float(analytic[name][index]), numeric)
        if error > worst_error:
            worst_error, worst = error, (name, index)

    passed = worst_error < tolerance
    message = f"max relative error {worst_error:.3e} over {len(coordinates)} coordinates"
    if not passed:
        logger.warning(f"Gradient check failed: {message} (worst at {worst})")
    return GradientCheckResult(passed, worst_error, len(coordinates), message, worst)
