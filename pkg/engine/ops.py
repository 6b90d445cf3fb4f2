"""
Differentiable operations recorded on a Tape.

The set is closed: convolution, bias, ReLU, candidate softmax and the few
elementwise/reduction helpers the losses need. Superpixel pooling records
its own entries in superpixels.pooling.
"""

import logging
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GeometryError, ParameterError, ShapeError
from .tensor import DTYPE, Node

logger = logging.getLogger(__name__)

CANDIDATES = 9
NORM_EPS = 1e-12
_NORM_FLOOR = float(np.sqrt(NORM_EPS))


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(x: Node, kernel: Node, stride: int = 1, padding: int = 0) -> Node:
    """2-D cross-correlation of an (H, W, Cin) map with a (k, k, Cin, Cout) kernel"""
    if kernel.value.ndim != 4 or kernel.value.shape[0] != kernel.value.shape[1]:
        raise ShapeError(f"Kernel must be (k, k, Cin, Cout), got {kernel.value.shape}")
    k, _, c_in, c_out = kernel.value.shape
    if k % 2 == 0:
        raise ShapeError(f"Kernel spatial size must be odd, got {k}")
    if stride not in (1, 2):
        raise ParameterError(f"Stride must be 1 or 2, got {stride}")
    if padding < 0:
        raise ParameterError(f"Padding must be non-negative, got {padding}")
    if x.value.ndim != 3 or x.value.shape[2] != c_in:
        raise ShapeError(f"Input channels {x.value.shape} do not match kernel input channels {c_in}")

    height, width, _ = x.value.shape
    out_h = conv_output_size(height, k, stride, padding)
    out_w = conv_output_size(width, k, stride, padding)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"Input {height}x{width} too small for kernel {k} with padding {padding}")

    padded = np.pad(x.value, ((padding, padding), (padding, padding), (0, 0)))
    windows = sliding_window_view(padded, (k, k), axis=(0, 1))[::stride, ::stride]
    weights = kernel.value
    out = np.einsum('hwcij,ijco->hwo', windows, weights)

    def vjp(grad: np.ndarray):
        grad_kernel = np.einsum('hwcij,hwo->ijco', windows, grad)
        grad_padded = np.zeros_like(padded)
        row_stop = stride * (out_h - 1) + 1
        col_stop = stride * (out_w - 1) + 1
        for i in range(k):
            for j in range(k):
                grad_padded[i:i + row_stop:stride, j:j + col_stop:stride, :] += grad @ weights[i, j].T
        grad_input = grad_padded[padding:padding + height, padding:padding + width, :]
        return grad_input, grad_kernel

    return x.tape.record(out, (x, kernel), vjp)


def add_bias(x: Node, bias: Node) -> Node:
    """Add a per-channel bias vector"""
    if bias.value.shape != (x.value.shape[-1],):
        raise ShapeError(f"Bias shape {bias.value.shape} does not match {x.value.shape[-1]} channels")

    def vjp(grad: np.ndarray):
        return grad, grad.reshape(-1, grad.shape[-1]).sum(axis=0)

    return x.tape.record(x.value + bias.value, (x, bias), vjp)


def relu(x: Node) -> Node:
    """Elementwise max(0, v); the subgradient at 0 is 0"""
    mask = x.value > 0

    def vjp(grad: np.ndarray):
        return (grad * mask,)

    return x.tape.record(np.where(mask, x.value, 0.0), (x,), vjp)


def softmax_candidates(logits: Node, valid_mask: np.ndarray) -> Node:
    """Per-pixel softmax over the valid entries of a 9-slot candidate axis.

    Invalid slots receive exactly 0.
    """
    if logits.value.ndim != 3 or logits.value.shape[2] != CANDIDATES:
        raise ShapeError(f"Candidate logits must be (H, W, 9), got {logits.value.shape}")
    valid = np.asarray(valid_mask, dtype=bool)
    if valid.shape != logits.value.shape:
        raise ShapeError(f"Valid mask shape {valid.shape} does not match logits {logits.value.shape}")
    if not np.all(valid.any(axis=-1)):
        empty = int(np.count_nonzero(~valid.any(axis=-1)))
        raise GeometryError(f"{empty} pixel(s) have no valid candidate seed")

    masked = np.where(valid, logits.value, -np.inf)
    peak = masked.max(axis=-1, keepdims=True)
    exp = np.where(valid, np.exp(masked - peak), 0.0)
    weights = exp / exp.sum(axis=-1, keepdims=True)

    def vjp(grad: np.ndarray):
        inner = (grad * weights).sum(axis=-1, keepdims=True)
        return (weights * (grad - inner),)

    return logits.tape.record(weights, (logits,), vjp)


def add(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"Cannot add shapes {a.value.shape} and {b.value.shape}")
    return a.tape.record(a.value + b.value, (a, b), lambda grad: (grad, grad))


def subtract(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"Cannot subtract shapes {a.value.shape} and {b.value.shape}")
    return a.tape.record(a.value - b.value, (a, b), lambda grad: (grad, -grad))


def multiply(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"Cannot multiply shapes {a.value.shape} and {b.value.shape}")
    left, right = a.value, b.value
    return a.tape.record(left * right, (a, b), lambda grad: (grad * right, grad * left))


def scale(a: Node, factor: Union[int, float]) -> Node:
    factor = float(factor)
    return a.tape.record(a.value * factor, (a,), lambda grad: (grad * factor,))


def square(a: Node) -> Node:
    value = a.value
    return a.tape.record(value * value, (a,), lambda grad: (2.0 * value * grad,))


def sum_all(a: Node) -> Node:
    shape = a.value.shape
    # ravel keeps the accumulation order row-major
    total = np.asarray(a.value.ravel().sum(), dtype=DTYPE)
    return a.tape.record(total, (a,), lambda grad: (np.full(shape, float(grad), dtype=DTYPE),))


def mean_all(a: Node) -> Node:
    count = a.value.size
    if count == 0:
        raise ShapeError("Cannot take the mean of an empty node")
    return scale(sum_all(a), 1.0 / count)


def pixel_norm(a: Node, squared: bool = False) -> Node:
    """Per-pixel Euclidean norm over the channel axis, (H, W, C) -> (H, W).

    The norm is smoothed as sqrt(|v|^2 + eps) - sqrt(eps): differentiable at 0
    and exactly 0 for a zero residual. With squared=True returns |v|^2.
    """
    value = a.value
    sq = (value * value).sum(axis=-1)
    if squared:
        return a.tape.record(sq, (a,), lambda grad: (2.0 * value * grad[..., None],))

    root = np.sqrt(sq + NORM_EPS)

    def vjp(grad: np.ndarray):
        return (value * (grad / root)[..., None],)

    return a.tape.record(root - _NORM_FLOOR, (a,), vjp)
