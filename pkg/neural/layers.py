"""
Parameterized building blocks.

This module contains the layers shared by the path generator and the
propagation model:
- Module: parameter discovery, train/eval mode, state dicts
- Linear, Embedding, LayerNorm, Dropout, MLP
- MultiHeadAttention (scaled dot-product, optional boolean mask)
- TransformerBlock: attention + residual + norm, feed-forward + residual + norm
"""

from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import CheckpointError, ValidationError
from neural.functional import glorot_uniform, masked_softmax
from neural.tensor import Tensor


class Module:
    """Base class; attributes that are Tensors with requires_grad are parameters."""

    def __init__(self):
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        """Yield (dotted name, parameter) in attribute definition order."""
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [param for _, param in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(param.size for param in self.parameters())

    def zero_grad(self):
        for param in self.parameters():
            param.zero_grad()

    def _children(self) -> Iterator["Module"]:
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                yield from (item for item in value if isinstance(item, Module))

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix: str = ""):
        """
        Copy arrays into parameters by name.

        Raises:
            CheckpointError: missing name or shape mismatch
        """
        for name, param in self.named_parameters():
            key = f"{prefix}{name}"
            if key not in state:
                raise CheckpointError(f"checkpoint lacks parameter '{key}'")
            array = np.asarray(state[key], dtype=np.float64)
            if array.shape != param.shape:
                raise CheckpointError(f"parameter '{key}' has shape {array.shape}, expected {param.shape}")
            param.data = array.copy()


class Linear(Module):
    """y = x W + b with Glorot-uniform W."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.n_in = n_in
        self.n_out = n_out
        self.weight = Tensor(glorot_uniform(n_in, n_out, rng), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ValidationError(f"Linear expects width {self.n_in}, got {x.shape[-1]}")
        out = x @ self.weight
        return out + self.bias if self.bias is not None else out


class Embedding(Module):
    """Lookup table of row vectors."""

    def __init__(self, num_embeddings: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.num_embeddings = num_embeddings
        self.weight = Tensor(glorot_uniform(num_embeddings, dim, rng), requires_grad=True)

    def forward(self, ids: Sequence[int]) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.num_embeddings):
            raise ValidationError(f"embedding id outside [0, {self.num_embeddings})")
        return self.weight[ids]


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        centered = x - x.mean(axis=-1, keepdims=True)
        variance = (centered ** 2).mean(axis=-1, keepdims=True)
        return centered / (variance + self.eps) ** 0.5 * self.gamma + self.beta


class Dropout(Module):
    """Inverted dropout; identity in eval mode or at rate 0."""

    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        keep = self.rng.random(x.shape) >= self.rate
        return x * (keep / (1.0 - self.rate))


class MLP(Module):
    """Two linear layers with a ReLU between them."""

    def __init__(self, n_in: int, hidden: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.first = Linear(n_in, hidden, rng)
        self.second = Linear(hidden, n_out, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.second(self.first(x).relu())


class MultiHeadAttention(Module):
    """
    Multi-head scaled dot-product attention over unbatched sequences.

    The weights of the most recent call are kept in last_weights with shape
    (heads, query length, key length).
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if d % heads:
            raise ValidationError(f"width {d} is not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        self.w_query = Linear(d, d, rng)
        # No bias: it shifts every score of a query row equally and cancels in the softmax.
        self.w_key = Linear(d, d, rng, bias=False)
        self.w_value = Linear(d, d, rng)
        self.w_out = Linear(d, d, rng)
        self.last_weights: Optional[np.ndarray] = None

    def _split(self, x: Tensor) -> Tensor:
        length = x.shape[0]
        return x.reshape(length, self.heads, self.d // self.heads).swapaxes(0, 1)

    def forward(self, query: Tensor, key: Tensor, value: Tensor,
                mask: Optional[np.ndarray] = None) -> Tensor:
        """
        Attend from query rows to key/value rows.

        Args:
            query: (Lq, d)
            key: (Lk, d)
            value: (Lk, d)
            mask: Optional (Lq, Lk) boolean; True blocks attention

        Returns:
            (Lq, d) tensor
        """
        for label, x in (("query", query), ("key", key), ("value", value)):
            if x.ndim != 2 or x.shape[-1] != self.d:
                raise ValidationError(f"attention {label} must be (length, {self.d}), got {x.shape}")
        if key.shape[0] != value.shape[0]:
            raise ValidationError(f"key length {key.shape[0]} != value length {value.shape[0]}")
        q = self._split(self.w_query(query))
        k = self._split(self.w_key(key))
        v = self._split(self.w_value(value))
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(self.d // self.heads))
        weights = masked_softmax(scores, None if mask is None else np.asarray(mask, dtype=bool)[None])
        self.last_weights = weights.data
        context = (weights @ v).swapaxes(0, 1).reshape(query.shape[0], self.d)
        return self.w_out(context)


class TransformerBlock(Module):
    """Post-norm attention block: Transformer(query, key, value)."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, dropout: float = 0.0,
                 ff_multiplier: int = 4):
        super().__init__()
        self.attention = MultiHeadAttention(d, heads, rng)
        self.norm_attention = LayerNorm(d)
        self.feed_forward = MLP(d, ff_multiplier * d, d, rng)
        self.norm_feed_forward = LayerNorm(d)
        self.dropout = Dropout(dropout, rng)

    def forward(self, query: Tensor, key: Tensor, value: Tensor,
                mask: Optional[np.ndarray] = None) -> Tensor:
        x = self.norm_attention(query + self.dropout(self.attention(query, key, value, mask)))
        return self.norm_feed_forward(x + self.dropout(self.feed_forward(x)))


def transformer_block(query: Tensor, key: Tensor, value: Tensor, block: TransformerBlock,
                      mask: Optional[np.ndarray] = None) -> Tensor:
    """Apply one TransformerBlock; output shape equals query shape."""
    return block(query, key, value, mask)


def causal_mask(length: int) -> np.ndarray:
    """(length, length) mask blocking attention to later positions."""
    return np.triu(np.ones((length, length), dtype=bool), k=1)
