"""
Dense feature maps and a minimal reverse-mode tape.

Every differentiable operation records one entry on the tape holding its
output node, its input nodes and a vector-Jacobian product closure.
`Tape.backward` replays the entries in exact reverse order.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

DTYPE = np.float64

# A vjp receives the output gradient and returns one gradient per input
# (None where the input does not need one).
VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Immutable H x W x C map of finite doubles in (y, x, c) order"""
    data: np.ndarray

    def __post_init__(self):
        array = np.array(self.data, dtype=DTYPE, copy=True)
        if array.ndim == 2:
            array = array[:, :, None]
        if array.ndim != 3:
            raise ShapeError(f"FeatureMap needs 2 or 3 dimensions, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise NumericalError("FeatureMap contains non-finite values")
        array.setflags(write=False)
        object.__setattr__(self, 'data', array)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape


UNLABELED = 255


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Immutable H x W map of integer ids; UNLABELED (255) marks unsupervised pixels"""
    ids: np.ndarray

    def __post_init__(self):
        array = np.array(self.ids, copy=True)
        if array.ndim != 2:
            raise ShapeError(f"LabelMap needs 2 dimensions, got shape {array.shape}")
        if array.size and not np.issubdtype(array.dtype, np.integer):
            if not np.all(np.equal(np.mod(array, 1), 0)):
                raise DataError("LabelMap ids must be integers")
        array = array.astype(np.int64)
        if array.size and array.min() < 0:
            raise DataError("LabelMap ids must be non-negative")
        array.setflags(write=False)
        object.__setattr__(self, 'ids', array)

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.ids.shape

    @property
    def labeled(self) -> np.ndarray:
        """Boolean mask of pixels carrying a class"""
        return self.ids != UNLABELED

    def validate_classes(self, class_count: int) -> None:
        """Raise DataError unless every id is a class below class_count or UNLABELED"""
        bad = self.labeled & (self.ids >= class_count)
        if np.any(bad):
            offending = sorted(set(int(v) for v in self.ids[bad]))[:5]
            raise DataError(f"Label ids {offending} are not below class count {class_count} nor UNLABELED")

    @classmethod
    def full(cls, height: int, width: int, value: int = UNLABELED) -> "LabelMap":
        return cls(np.full((height, width), value, dtype=np.int64))


class Node:
    """A value recorded on a tape"""
    __slots__ = ('value', 'tape', 'index', 'name')

    def __init__(self, value: np.ndarray, tape: "Tape", index: int, name: Optional[str] = None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        """Scalar value of a 0-d node"""
        return float(self.value)

    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"Node{label}(shape={self.value.shape}, index={self.index})"


@dataclass(frozen=True)
class _Record:
    output: int
    inputs: Tuple[int, ...]
    vjp: VJP


class Tape:
    """Ordered operation record plus a registry of named trainable parameters"""

    def __init__(self):
        self._records: List[_Record] = []
        self._nodes: List[Node] = []
        self._params: Dict[str, Node] = {}

    def _new_node(self, value: np.ndarray, name: Optional[str] = None) -> Node:
        node = Node(value, self, len(self._nodes), name)
        self._nodes.append(node)
        return node

    def parameter(self, name: str, value: np.ndarray) -> Node:
        """Register a trainable parameter; its gradient is reported by backward()"""
        if name in self._params:
            raise ShapeError(f"Parameter '{name}' already registered on this tape")
        array = np.array(value, dtype=DTYPE, copy=True)
        node = self._new_node(array, name)
        self._params[name] = node
        return node

    def constant(self, value, name: Optional[str] = None) -> Node:
        """Record a constant input (no gradient is reported for it)"""
        if isinstance(value, FeatureMap):
            value = value.data
        return self._new_node(np.asarray(value, dtype=DTYPE), name)

    def record(self, value: np.ndarray, inputs: Sequence[Node], vjp: VJP) -> Node:
        """Append an operation result; inputs must live on this tape"""
        for node in inputs:
            if node.tape is not self:
                raise ShapeError("Cannot combine nodes from different tapes")
        if not np.all(np.isfinite(value)):
            raise NumericalError("Operation produced non-finite values")
        node = self._new_node(value)
        self._records.append(_Record(node.index, tuple(n.index for n in inputs), vjp))
        return node

    @property
    def parameters(self) -> Dict[str, Node]:
        return dict(self._params)

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Node) -> Dict[str, np.ndarray]:
        """Gradient of a scalar loss w.r.t. every registered parameter.

        Parameters the loss does not depend on get zero gradients. The tape is
        not modified, so repeated calls return identical results.
        """
        if loss.tape is not self:
            raise ShapeError("Loss node belongs to a different tape")
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")

        grads: Dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
        for record in reversed(self._records):
            if record.output > loss.index:
                continue
            upstream = grads.pop(record.output, None)
            if upstream is None:
                continue
            input_grads = record.vjp(upstream)
            for index, grad in zip(record.inputs, input_grads):
                if grad is None:
                    continue
                if index in grads:
                    grads[index] = grads[index] + grad
                else:
                    grads[index] = grad

        result = {}
        for name, node in self._params.items():
            grad = grads.get(node.index)
            result[name] = np.zeros_like(node.value) if grad is None else np.asarray(grad).reshape(node.value.shape)
        return result
