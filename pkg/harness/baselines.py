"""
Fixed reasoning-path strategies to compare the learned path generator against.
"""

import re
from typing import Optional, Tuple

import numpy as np

from core.errors import ValidationError
from core.oracle_path import ReasoningPath, enumerate_paths
from core.semantic_graph import SemanticGraph

LAST_N = "last_n"
RANDOM = "random"
ORACLE = "oracle"
LEARNED = "learned"
BASELINE_STRATEGIES = (LAST_N, RANDOM, ORACLE)
STRATEGIES = (LEARNED,) + BASELINE_STRATEGIES

MAX_LAST_N = 10

_LAST_N_PATTERN = re.compile(r"^last_(\d+)$")


def parse_strategy(name: str, n: Optional[int] = None) -> Tuple[str, int]:
    """
    Split a strategy name into (strategy, n).

    'last_3' is shorthand for ('last_n', 3); plain 'last_n' takes n from the
    argument (default 1).

    Raises:
        ValidationError: Unknown strategy
    """
    match = _LAST_N_PATTERN.match(name)
    if match:
        return LAST_N, int(match.group(1))
    if name not in STRATEGIES:
        raise ValidationError(f"unknown path strategy '{name}' (expected one of {', '.join(STRATEGIES)} or last_<n>)")
    return name, 1 if n is None else n


def last_n_path(t: int, n: int) -> ReasoningPath:
    """[t, t-1, ..., max(1, t-n)]; turn indices start at 1 so the lower end is clamped to 1."""
    if not 1 <= n <= MAX_LAST_N:
        raise ValidationError(f"n must lie in 1..{MAX_LAST_N}, got {n}")
    if t < 1:
        raise ValidationError(f"turn must be >= 1, got {t}")
    return ReasoningPath(tuple(range(t, max(1, t - n) - 1, -1)))


def random_path(graph: SemanticGraph, t: int, rng: np.random.Generator) -> ReasoningPath:
    """A uniform draw from every graph-valid decreasing path starting at t."""
    candidates = enumerate_paths(graph, t)
    return candidates[int(rng.integers(len(candidates)))]


def baseline_path(strategy: str, graph: SemanticGraph, t: int, rng: np.random.Generator, n: int = 1,
                  oracle_path: Optional[ReasoningPath] = None) -> ReasoningPath:
    """
    Path chosen by a fixed strategy.

    Args:
        strategy: 'last_n', 'random' or 'oracle'
        graph: Semantic graph at turn t
        t: Current turn
        rng: Generator for the random strategy
        n: Window for last_n, 1..10
        oracle_path: Ground-truth path for the oracle strategy

    Returns:
        ReasoningPath starting at t
    """
    if strategy == LAST_N:
        return last_n_path(t, n)
    if strategy == RANDOM:
        return random_path(graph, t, rng)
    if strategy == ORACLE:
        if oracle_path is None:
            raise ValidationError("oracle strategy needs the ground-truth path")
        return oracle_path
    raise ValidationError(f"unknown baseline strategy '{strategy}'")
