"""
Reasoning paths and their ground-truth derivation.

This module handles path supervision including:
- The ReasoningPath record (current turn first, strictly decreasing turns)
- BFS enumeration of every path candidate from the current turn
- Answer-span coverage scoring of a path
- Ground-truth selection: coverage, then length, then a seeded uniform pick
- The global-similarity oracle used with whole-turn graphs
"""

from collections import deque
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from core.embeddings import EmbeddingTable, SpanMatcher, cosine
from core.errors import GraphError, ValidationError
from core.semantic_graph import GLOBAL, SemanticGraph
from core.span_extractor import LexicalSpan

Seed = Union[int, np.random.Generator, None]

COVERAGE = "coverage"
GLOBAL_SIMILARITY = "global_similarity"
AUTO = "auto"
ORACLE_MODES = (AUTO, COVERAGE, GLOBAL_SIMILARITY)


class ReasoningPath(NamedTuple):
    """Turn indices from the current turn backward; terminated once EOP is emitted."""
    turns: Tuple[int, ...]
    terminated: bool = True

    @property
    def current_turn(self) -> int:
        return self.turns[0]

    @property
    def hops(self) -> int:
        return len(self.turns) - 1

    @property
    def edges(self) -> List[Tuple[int, int]]:
        """Consecutive (from, to) pairs."""
        return list(zip(self.turns, self.turns[1:]))

    def validate(self, graph: Optional[SemanticGraph] = None, max_turns: Optional[int] = None):
        """
        Check the path invariants, and graph validity when a graph is given.

        Raises:
            ValidationError: empty, non-decreasing, too long or off-graph path
        """
        if not self.turns:
            raise ValidationError("reasoning path is empty")
        for a, b in self.edges:
            if b >= a:
                raise ValidationError(f"path {list(self.turns)} is not strictly decreasing")
        if max_turns is not None and len(self.turns) > max_turns:
            raise ValidationError(f"path {list(self.turns)} longer than {max_turns} turns")
        if graph is not None:
            if self.turns[0] != graph.current_turn:
                raise ValidationError(
                    f"path {list(self.turns)} does not start at turn {graph.current_turn}")
            for a, b in self.edges:
                if not graph.has_edge(a, b):
                    raise ValidationError(f"path step {a}->{b} is not a graph edge")

    def to_list(self) -> List[int]:
        return list(self.turns)


def _as_rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def enumerate_paths(graph: SemanticGraph, t: int) -> List[ReasoningPath]:
    """
    All simple paths from t along graph edges with strictly decreasing turns.

    Breadth-first, so shorter paths come first; among equal lengths, larger
    successor turns come first. The length-1 path [t] is always included.

    Raises:
        GraphError: t is not a node of the graph
    """
    if t not in graph:
        raise GraphError(f"turn {t} is not a node of the graph")
    paths = []
    queue = deque([(t,)])
    while queue:
        prefix = queue.popleft()
        paths.append(ReasoningPath(prefix))
        last = prefix[-1]
        for nxt in sorted(graph.neighbors(last), reverse=True):
            if nxt < last:
                queue.append(prefix + (nxt,))
    return paths


def score_path(path: ReasoningPath, answer_spans: Sequence[LexicalSpan], graph: SemanticGraph,
               matcher: Optional[SpanMatcher] = None) -> int:
    """
    Count distinct answer spans matched by a span of any path turn other than t.

    Args:
        path: Candidate path
        answer_spans: Spans of the expected answer
        graph: Graph the path was enumerated from
        matcher: Similarity test (default: the graph's own)

    Returns:
        Coverage count
    """
    matcher = matcher or graph.matcher
    if matcher is None:
        raise GraphError("graph has no span matcher; pass one explicitly")
    past_spans = [span for turn in path.turns[1:] for span in graph.span_map.get(turn, [])]
    if not past_spans:
        return 0
    distinct = {(span.tokens, span.kind): span for span in answer_spans}
    return sum(1 for span in distinct.values() if matcher.any_match(span, past_spans))


def tied_candidates(paths: Sequence[ReasoningPath], answer_spans: Sequence[LexicalSpan],
                    graph: SemanticGraph, matcher: Optional[SpanMatcher] = None) -> Tuple[List[ReasoningPath], int]:
    """
    The paths left after the coverage and length tie-breaks.

    Returns:
        (tied shortest best-coverage paths in enumeration order, best coverage)
    """
    if not paths:
        raise ValidationError("no path candidates")
    scores = [score_path(path, answer_spans, graph, matcher) for path in paths]
    best = max(scores)
    best_paths = [path for path, score in zip(paths, scores) if score == best]
    shortest = min(len(path.turns) for path in best_paths)
    return [path for path in best_paths if len(path.turns) == shortest], best


def select_ground_truth(paths: Sequence[ReasoningPath], answer_spans: Sequence[LexicalSpan],
                        graph: SemanticGraph, rng_seed: Seed = None,
                        matcher: Optional[SpanMatcher] = None) -> ReasoningPath:
    """
    Pick the ground-truth path: highest coverage, then shortest, then uniform.

    Args:
        paths: Candidates from enumerate_paths
        answer_spans: Spans of the expected answer
        graph: Source graph
        rng_seed: Seed or generator for the final uniform tie-break

    Returns:
        Selected path
    """
    ties, _ = tied_candidates(paths, answer_spans, graph, matcher)
    if len(ties) == 1:
        return ties[0]
    return ties[int(_as_rng(rng_seed).integers(len(ties)))]


def global_tied_candidates(paths: Sequence[ReasoningPath], answer_tokens: Sequence[str],
                           graph: SemanticGraph, table: EmbeddingTable) -> List[ReasoningPath]:
    """Shortest paths ending at the past turn most similar to the expected answer."""
    if not paths:
        raise ValidationError("no path candidates")
    target = table.mean_vector(answer_tokens)
    vectors = graph.turn_vectors or {
        node: table.mean_vector(graph.turn_tokens(node)) for node in graph.nodes
    }
    reachable = sorted({path.turns[-1] for path in paths if len(path.turns) > 1})
    if not reachable:
        return [path for path in paths if len(path.turns) == 1]
    similarity = {node: cosine(vectors[node], target) for node in reachable}
    best = max(similarity.values())
    endpoints = {node for node, value in similarity.items() if value == best}
    ending = [path for path in paths if len(path.turns) > 1 and path.turns[-1] in endpoints]
    shortest = min(len(path.turns) for path in ending)
    return [path for path in ending if len(path.turns) == shortest]


def select_ground_truth_global(paths: Sequence[ReasoningPath], answer_tokens: Sequence[str],
                               graph: SemanticGraph, table: EmbeddingTable,
                               rng_seed: Seed = None) -> ReasoningPath:
    """
    Oracle for whole-turn graphs: shortest path to the past turn whose
    whole-turn embedding is closest to the answer embedding.
    """
    ties = global_tied_candidates(paths, answer_tokens, graph, table)
    if len(ties) == 1:
        return ties[0]
    return ties[int(_as_rng(rng_seed).integers(len(ties)))]


def resolve_oracle_mode(mode: str, semantics: str) -> str:
    """Map 'auto' to the oracle that fits the graph semantics."""
    if mode not in ORACLE_MODES:
        raise ValidationError(f"unknown oracle mode '{mode}'")
    if mode != AUTO:
        return mode
    return GLOBAL_SIMILARITY if semantics == GLOBAL else COVERAGE
