"""
Stateless neural functions built on Tensor.

- masked_softmax / masked_log_softmax with a very low fill value
- Sinusoidal position encoding
- Cross-entropy with label smoothing
- Glorot-uniform initialization
"""

from typing import Optional, Sequence

import numpy as np

from core.errors import ValidationError
from neural.tensor import Tensor

S_MASKED = -1e9
POSITION_BASE = 10000.0


def _check_mask(mask: np.ndarray, shape) -> np.ndarray:
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), shape)
    if mask.shape[-1:] and np.any(mask.all(axis=-1)):
        raise ValidationError("masked softmax over a row with every entry masked")
    return mask


def masked_softmax(logits: Tensor, mask: Optional[np.ndarray] = None, s_masked: float = S_MASKED) -> Tensor:
    """
    Softmax over the last axis after replacing masked logits by s_masked.

    Args:
        logits: Scores, any shape
        mask: Boolean array broadcastable to logits; True marks a masked entry
        s_masked: Fill value for masked logits

    Returns:
        Probabilities summing to 1 along the last axis

    Raises:
        ValidationError: a row has every entry masked
    """
    if mask is None:
        return logits.softmax(axis=-1)
    return logits.masked_fill(_check_mask(mask, logits.shape), s_masked).softmax(axis=-1)


def masked_log_softmax(logits: Tensor, mask: Optional[np.ndarray] = None, s_masked: float = S_MASKED) -> Tensor:
    """Log of masked_softmax, computed stably."""
    if mask is None:
        return logits.log_softmax(axis=-1)
    return logits.masked_fill(_check_mask(mask, logits.shape), s_masked).log_softmax(axis=-1)


def pos_encode(length: int, d: int) -> Tensor:
    """
    Sinusoidal position table of shape (length, d).

    Row p holds sin(p / 10000^(2i/d)) at column 2i and cos(...) at 2i+1.

    Raises:
        ValidationError: odd d
    """
    if d % 2:
        raise ValidationError(f"position encoding needs an even width, got {d}")
    positions = np.arange(length, dtype=np.float64)[:, None]
    rates = POSITION_BASE ** (np.arange(0, d, 2, dtype=np.float64) / d)
    table = np.zeros((length, d))
    table[:, 0::2] = np.sin(positions / rates)
    table[:, 1::2] = np.cos(positions / rates)
    return Tensor(table)


def cross_entropy_with_label_smoothing(logits: Tensor, targets: Sequence[int], epsilon: float = 0.0,
                                       mask: Optional[np.ndarray] = None,
                                       ignore_index: Optional[int] = None) -> Tensor:
    """
    Mean smoothed negative log-likelihood over target positions.

    The target distribution is (1 - epsilon) * onehot + epsilon / K. With
    epsilon = 0 this is plain cross-entropy.

    Args:
        logits: (N, K) scores, or (K,) for a single position
        targets: N class ids
        epsilon: Label smoothing mass
        mask: Optional (N, K) boolean mask applied before normalization
        ignore_index: Target id that contributes no loss

    Returns:
        Scalar loss tensor

    Raises:
        ValidationError: target outside [0, K)
    """
    if logits.ndim == 1:
        logits = logits.reshape(1, -1)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, k = logits.shape
    if targets.shape[0] != n:
        raise ValidationError(f"{targets.shape[0]} targets for {n} logit rows")
    keep = np.ones(n, dtype=bool) if ignore_index is None else targets != ignore_index
    if np.any((targets[keep] < 0) | (targets[keep] >= k)):
        raise ValidationError(f"target outside class range [0, {k})")
    if not np.any(keep):
        raise ValidationError("no target positions to score")
    if mask is not None and epsilon > 0:
        raise ValidationError("label smoothing cannot be combined with an output mask")
    distribution = np.zeros((n, k))
    distribution[np.arange(n)[keep], targets[keep]] = 1.0 - epsilon
    distribution[keep] += epsilon / k
    log_probs = masked_log_softmax(logits, mask)
    return -(log_probs * distribution).sum() * (1.0 / int(keep.sum()))


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, shape=None) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))
