"""
Dense float64 tensors with reverse-mode gradients.

This module contains the autodiff engine including:
- The Tensor class with broadcasting arithmetic and matrix products
- Reductions, shape ops, indexing, concatenation and masking
- Elementwise nonlinearities and (log-)softmax
- A no_grad() context for forward-only evaluation
- backward(): iterative topological sort, each node visited once

Every op checks its output for NaN/Inf and raises NumericalError.
"""

import contextlib
import contextvars
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import GraphError, NumericalError, ValidationError

_grad_enabled = contextvars.ContextVar("dialpath_grad_enabled", default=True)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_finite(data: np.ndarray, op: str):
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite values produced by {op}")


class Tensor:
    """An n-dimensional float64 array that records how it was computed."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 _parents: Tuple["Tensor", ...] = (), _backward: Optional[Callable] = None,
                 _op: str = "leaf"):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) \
            else data.astype(np.float64, copy=False)
        _check_finite(self.data, _op)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    # -- basic properties -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ValidationError(f"item() on a tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- graph plumbing ---------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: Tuple["Tensor", ...], backward: Callable, op: str) -> "Tensor":
        requires = is_grad_enabled() and any(p.requires_grad for p in parents)
        if requires:
            return Tensor(data, True, _parents=parents, _backward=backward, _op=op)
        return Tensor(data, False, _op=op)

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = _unbroadcast(grad, self.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None):
        """
        Accumulate d(self)/d(leaf) into every leaf with requires_grad.

        Args:
            grad: Upstream gradient (default: ones, only for single-element tensors)

        Raises:
            GraphError: self is not connected to any trainable tensor
        """
        if not self.requires_grad:
            raise GraphError("backward() on a tensor detached from every trainable parameter")
        if grad is None:
            if self.size != 1:
                raise GraphError(f"backward() needs an explicit gradient for shape {self.shape}")
            grad = np.ones_like(self.data)
        order = self._topological_order()
        for node in order:
            if node._parents:
                node.grad = None
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(g)
            other._accumulate(g)
        return Tensor._make(self.data + other.data, (self, other), backward, "add")

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: self._accumulate(-g), "neg")

    def __sub__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(g)
            other._accumulate(-g)
        return Tensor._make(self.data - other.data, (self, other), backward, "sub")

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(g * other.data)
            other._accumulate(g * self.data)
        return Tensor._make(self.data * other.data, (self, other), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(g / other.data)
            other._accumulate(-g * self.data / (other.data ** 2))
        with np.errstate(divide='ignore', invalid='ignore'):
            data = self.data / other.data
        return Tensor._make(data, (self, other), backward, "div")

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise ValidationError("tensor exponents are not supported")

        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))
        with np.errstate(divide='ignore', invalid='ignore'):
            data = self.data ** exponent
        return Tensor._make(data, (self,), backward, "pow")

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ValidationError(f"matmul needs at least 2-D operands, got {self.shape} @ {other.shape}")
        if self.shape[-1] != other.shape[-2]:
            raise ValidationError(f"matmul width mismatch: {self.shape} @ {other.shape}")

        def backward(g):
            self._accumulate(g @ np.swapaxes(other.data, -1, -2))
            other._accumulate(np.swapaxes(self.data, -1, -2) @ g)
        return Tensor._make(self.data @ other.data, (self, other), backward, "matmul")

    # -- reductions and shape ---------------------------------------------

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))
        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward, "sum")

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._make(self.data.reshape(shape), (self,),
                            lambda g: self._accumulate(g.reshape(self.shape)), "reshape")

    def transpose(self, *axes) -> "Tensor":
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        return Tensor._make(self.data.transpose(axes), (self,),
                            lambda g: self._accumulate(g.transpose(inverse)), "transpose")

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def swapaxes(self, a: int, b: int) -> "Tensor":
        return Tensor._make(np.swapaxes(self.data, a, b), (self,),
                            lambda g: self._accumulate(np.swapaxes(g, a, b)), "swapaxes")

    def __getitem__(self, index) -> "Tensor":
        if isinstance(index, Tensor):
            raise ValidationError("tensor indices are not supported")

        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, index, g)
            self._accumulate(full)
        return Tensor._make(np.array(self.data[index]), (self,), backward, "getitem")

    def masked_fill(self, mask: np.ndarray, value: float) -> "Tensor":
        """Replace entries where mask is True by value; no gradient flows through them."""
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), self.shape)
        return Tensor._make(np.where(mask, value, self.data), (self,),
                            lambda g: self._accumulate(np.where(mask, 0.0, g)), "masked_fill")

    # -- nonlinearities ---------------------------------------------------

    def exp(self) -> "Tensor":
        with np.errstate(over='ignore'):
            out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: self._accumulate(g * out), "exp")

    def log(self) -> "Tensor":
        with np.errstate(divide='ignore', invalid='ignore'):
            out = np.log(self.data)
        return Tensor._make(out, (self,), lambda g: self._accumulate(g / self.data), "log")

    def relu(self) -> "Tensor":
        positive = self.data > 0
        return Tensor._make(np.where(positive, self.data, 0.0), (self,),
                            lambda g: self._accumulate(g * positive), "relu")

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor._make(out, (self,), lambda g: self._accumulate(g * (1.0 - out ** 2)), "tanh")

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def backward(g):
            self._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))
        return Tensor._make(out, (self,), backward, "softmax")

    def log_softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

        def backward(g):
            self._accumulate(g - np.exp(out) * g.sum(axis=axis, keepdims=True))
        return Tensor._make(out, (self,), backward, "log_softmax")


def as_tensor(value: ArrayLike) -> Tensor:
    """Wrap a constant (no gradient) unless it already is a Tensor."""
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along an existing axis."""
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for tensor, piece in zip(tensors, np.split(g, splits, axis=axis)):
            tensor._accumulate(piece)
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Stack along a new axis."""
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for i, tensor in enumerate(tensors):
            tensor._accumulate(np.take(g, i, axis=axis))
    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward, "stack")
