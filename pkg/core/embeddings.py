"""
Word-vector store for dialpath.

Provides the similarity primitives used by graph construction:
- Loading text-format word vectors (optionally with a word2vec "count dim" header)
- Deterministic hashed vectors for out-of-vocabulary tokens
- Span embedding by token-vector mean
- Cosine similarity and the span-level similarity test
"""

import hashlib
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from core.errors import ConfigError, EmbeddingFormatError, ValidationError
from core.span_extractor import LexicalSpan

HASH_PROJECTION = "hash_projection"
ZERO = "zero"
OOV_STRATEGIES = (HASH_PROJECTION, ZERO)

DEFAULT_TAU = 0.6
DEFAULT_HASH_DIM = 64


def hashed_vector(token: str, dim: int) -> np.ndarray:
    """Unit vector drawn from a generator seeded by the token's UTF-8 bytes."""
    seed = int.from_bytes(hashlib.sha256(token.encode('utf-8')).digest()[:8], 'little')
    vector = np.random.default_rng(seed).standard_normal(dim)
    return vector / np.linalg.norm(vector)


class EmbeddingTable:
    """Read-only token -> vector map of a fixed dimension."""

    def __init__(self, dim: int, vectors: Optional[Dict[str, np.ndarray]] = None,
                 oov_strategy: str = HASH_PROJECTION):
        """
        Initialize the table.

        Args:
            dim: Vector dimension d_w
            vectors: Known token vectors
            oov_strategy: 'hash_projection' or 'zero'
        """
        if dim < 1:
            raise ConfigError(f"embedding dimension must be >= 1, got {dim}")
        if oov_strategy not in OOV_STRATEGIES:
            raise ConfigError(f"unknown OOV strategy '{oov_strategy}'")
        self.dim = dim
        self.oov_strategy = oov_strategy
        self.vectors: Dict[str, np.ndarray] = {}
        self._oov_cache: Dict[str, np.ndarray] = {}
        for token, vector in (vectors or {}).items():
            vector = np.asarray(vector, dtype=np.float64)
            if vector.shape != (dim,) or not np.all(np.isfinite(vector)):
                raise ValidationError(f"vector for '{token}' must be {dim} finite floats")
            self.vectors[token] = vector

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def vector(self, token: str) -> np.ndarray:
        """Vector of a token, falling back to the OOV strategy."""
        if token in self.vectors:
            return self.vectors[token]
        if token not in self._oov_cache:
            if self.oov_strategy == HASH_PROJECTION:
                self._oov_cache[token] = hashed_vector(token, self.dim)
            else:
                self._oov_cache[token] = np.zeros(self.dim)
        return self._oov_cache[token]

    def mean_vector(self, tokens: Sequence[str]) -> np.ndarray:
        """Arithmetic mean of token vectors (zero vector for no tokens)."""
        if not tokens:
            return np.zeros(self.dim)
        # Sorted so the floating-point sum does not depend on token order.
        return np.mean([self.vector(token) for token in sorted(tokens)], axis=0)


def load_vectors(path: str, oov_strategy: str = HASH_PROJECTION) -> EmbeddingTable:
    """
    Load a text vector file with lines "token v1 v2 ... vd".

    A first line of exactly two integers is read as a word2vec "count dim"
    header.

    Raises:
        EmbeddingFormatError: inconsistent dimensions or unparsable floats
    """
    vectors: Dict[str, np.ndarray] = {}
    dim = None
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, 1):
            parts = line.split()
            if not parts or not parts[0]:
                continue
            if line_number == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            try:
                values = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError as e:
                raise EmbeddingFormatError(f"unparsable value: {e}", line_number)
            if dim is None:
                dim = len(values)
            if len(values) != dim or dim == 0:
                raise EmbeddingFormatError(f"expected {dim} values, found {len(values)}", line_number)
            if not np.all(np.isfinite(values)):
                raise EmbeddingFormatError("non-finite value", line_number)
            vectors[parts[0].lower()] = values
    if dim is None:
        raise EmbeddingFormatError(f"no vectors in {path}")
    return EmbeddingTable(dim, vectors, oov_strategy)


def embed_span(span: LexicalSpan, table: EmbeddingTable) -> np.ndarray:
    """Span embedding: mean of its token vectors."""
    return table.mean_vector(span.tokens)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """
    Cosine similarity u.v / (|u||v|), 0 when either norm is 0.

    Raises:
        ValidationError: dimension mismatch
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValidationError(f"dimension mismatch: {u.shape} vs {v.shape}")
    norm = float(np.linalg.norm(u) * np.linalg.norm(v))
    if norm == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / norm, -1.0, 1.0))


def is_similar(s_i: LexicalSpan, s_j: LexicalSpan, tau: float, table: EmbeddingTable) -> bool:
    """Token-identical spans, or cosine of span embeddings >= tau."""
    if s_i.tokens == s_j.tokens:
        return True
    return cosine(embed_span(s_i, table), embed_span(s_j, table)) >= tau


class SpanMatcher:
    """An embedding table bound to a threshold; the span similarity test of one graph."""

    def __init__(self, table: EmbeddingTable, tau: float = DEFAULT_TAU):
        self.table = table
        self.tau = tau

    def __call__(self, s_i: LexicalSpan, s_j: LexicalSpan) -> bool:
        return is_similar(s_i, s_j, self.tau, self.table)

    def any_match(self, span: LexicalSpan, candidates: Iterable[LexicalSpan]) -> bool:
        return any(self(span, other) for other in candidates)
