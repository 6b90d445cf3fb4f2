"""
Adam over a named parameter registry.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from engine.errors import ParameterError, ShapeError
from engine.tensor import DTYPE

logger = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8

Registry = Dict[str, np.ndarray]


@dataclass
class AdamState:
    """First/second moment estimates and the number of applied steps"""
    first: Registry = field(default_factory=dict)
    second: Registry = field(default_factory=dict)
    step: int = 0
    skipped: int = 0

    @classmethod
    def for_params(cls, params: Registry) -> "AdamState":
        return cls(
            first={name: np.zeros_like(value, dtype=DTYPE) for name, value in params.items()},
            second={name: np.zeros_like(value, dtype=DTYPE) for name, value in params.items()},
        )


def adam_step(params: Registry, grads: Registry, state: AdamState, lr: float,
              beta1: float = BETA1, beta2: float = BETA2, eps: float = EPSILON) -> Registry:
    """One bias-corrected Adam update; returns the new parameters.

    A non-finite gradient skips the whole step (parameters and moments are
    left untouched) and is counted in state.skipped.
    """
    if lr <= 0:
        raise ParameterError(f"Learning rate must be positive, got {lr}")
    for name, value in params.items():
        if name not in grads:
            raise ShapeError(f"Missing gradient for parameter '{name}'")
        if grads[name].shape != value.shape:
            raise ShapeError(f"Gradient for '{name}' has shape {grads[name].shape}, expected {value.shape}")
        if name not in state.first:
            state.first[name] = np.zeros_like(value, dtype=DTYPE)
            state.second[name] = np.zeros_like(value, dtype=DTYPE)

    bad = [name for name in params if not np.all(np.isfinite(grads[name]))]
    if bad:
        state.skipped += 1
        logger.warning(f"Skipping Adam step {state.step + 1}: non-finite gradient in {bad}")
        return dict(params)

    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    updated = {}
    for name, value in params.items():
        grad = grads[name]
        state.first[name] = beta1 * state.first[name] + (1.0 - beta1) * grad
        state.second[name] = beta2 * state.second[name] + (1.0 - beta2) * grad * grad
        m_hat = state.first[name] / correction1
        v_hat = state.second[name] / correction2
        updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return updated
