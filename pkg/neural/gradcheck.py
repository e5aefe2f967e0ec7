"""
Central finite-difference gradient checking.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from neural.tensor import Tensor, no_grad

DEFAULT_EPS = 1e-5


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, eps: float = DEFAULT_EPS,
                       indices: Optional[Sequence[Tuple[int, ...]]] = None) -> np.ndarray:
    """
    (f(x + eps) - f(x - eps)) / (2 eps) for every element of tensor.

    With indices, only those elements are perturbed; the others stay zero.
    """
    grad = np.zeros_like(tensor.data)
    with no_grad():
        for index in (np.ndindex(*tensor.shape) if indices is None else indices):
            original = tensor.data[index]
            tensor.data[index] = original + eps
            plus = fn().item()
            tensor.data[index] = original - eps
            minus = fn().item()
            tensor.data[index] = original
            grad[index] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """|a - n| / max(|a| + |n|, 1e-12), with |.| the Frobenius norm."""
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def _sample_indices(tensor: Tensor, max_entries: Optional[int],
                    rng: Optional[np.random.Generator]) -> Optional[List[Tuple[int, ...]]]:
    if max_entries is None or tensor.size <= max_entries:
        return None
    rng = rng if rng is not None else np.random.default_rng(0)
    flat = rng.choice(tensor.size, size=max_entries, replace=False)
    return [tuple(int(i) for i in np.unravel_index(k, tensor.shape)) for k in sorted(flat)]


def gradcheck(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = DEFAULT_EPS,
              max_entries: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> Dict[int, float]:
    """
    Compare backward() gradients with central differences.

    Args:
        fn: Closure recomputing a scalar loss from the given tensors
        tensors: Inputs/parameters with requires_grad=True
        eps: Finite-difference step
        max_entries: Check at most this many randomly chosen elements per tensor
        rng: Generator for the element sample

    Returns:
        Relative error per tensor position, over the checked elements
    """
    for tensor in tensors:
        tensor.zero_grad()
    fn().backward()
    errors = {}
    for i, tensor in enumerate(tensors):
        analytic = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad.copy()
        indices = _sample_indices(tensor, max_entries, rng)
        numeric = numerical_gradient(fn, tensor, eps, indices)
        if indices is not None:
            selected = tuple(np.array(indices).T)
            analytic, numeric = analytic[selected], numeric[selected]
        errors[i] = relative_error(analytic, numeric)
    return errors
