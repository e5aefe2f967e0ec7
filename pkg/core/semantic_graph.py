"""
Turn-level semantic graphs for dialpath.

This module builds one graph per (dialogue, turn):
- Compositional graphs: edges from similar lexical spans across turns
- Global graphs: edges from whole-turn embedding similarity
- Fully connected graphs
- BiDirect or TODirect edges, self-loops on every node
- Adjacency matrices and JSON/DOT views with edge provenance
"""

from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from core.dialogue import DialogueContext, DialogueTurn
from core.embeddings import DEFAULT_TAU, EmbeddingTable, SpanMatcher, cosine
from core.errors import ConfigError, GraphError
from core.span_extractor import LexicalSpan, SpanExtractor

COMPOSITIONAL = "compositional"
GLOBAL = "global"
FULLY_CONNECTED = "fully_connected"
SEMANTICS = (COMPOSITIONAL, GLOBAL, FULLY_CONNECTED)

BIDIRECT = "BiDirect"
TODIRECT = "TODirect"
DIRECTIONS = (BIDIRECT, TODIRECT)

Edge = Tuple[int, int]


class GraphConfig(NamedTuple):
    """Which graph variant to build."""
    semantics: str = COMPOSITIONAL
    direction: str = BIDIRECT
    tau: float = DEFAULT_TAU
    # Debug: store TODirect edges earlier->later instead of later->earlier.
    forward_todirect: bool = False

    def validate(self):
        if self.semantics not in SEMANTICS:
            raise ConfigError(f"unknown graph semantics '{self.semantics}'")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"unknown edge direction '{self.direction}'")


class SemanticGraph:
    """Turn nodes 1..t with directed edges, spans per turn and edge provenance."""

    def __init__(self, current_turn: int, config: GraphConfig,
                 resolved_turns: Sequence[DialogueTurn],
                 span_map: Optional[Dict[int, List[LexicalSpan]]] = None,
                 matcher: Optional[SpanMatcher] = None):
        self.current_turn = current_turn
        self.config = config
        self.resolved_turns: Dict[int, DialogueTurn] = {turn.turn_index: turn for turn in resolved_turns}
        self.nodes: List[int] = sorted(self.resolved_turns)
        self.edges: Set[Edge] = {(node, node) for node in self.nodes}
        self.span_map: Dict[int, List[LexicalSpan]] = span_map or {node: [] for node in self.nodes}
        self.edge_provenance: Dict[Edge, List[Tuple[LexicalSpan, LexicalSpan]]] = {}
        self.turn_vectors: Dict[int, np.ndarray] = {}
        self.matcher = matcher

    def __contains__(self, node: int) -> bool:
        return node in self.resolved_turns

    def add_edge(self, source: int, target: int,
                 provenance: Optional[Tuple[LexicalSpan, LexicalSpan]] = None):
        self.edges.add((source, target))
        if provenance is not None:
            self.edge_provenance.setdefault((source, target), []).append(provenance)

    def _connect(self, i: int, j: int, provenance_ij=None, provenance_ji=None):
        """Add the edge(s) between turns i and j allowed by the direction mode."""
        if self.config.direction == BIDIRECT:
            self.add_edge(i, j, provenance_ij)
            self.add_edge(j, i, provenance_ji)
            return
        later, earlier = (i, j) if i > j else (j, i)
        forward = self.config.forward_todirect
        if (i, j) == (later, earlier):
            source, target, prov = (earlier, later, provenance_ji) if forward else (later, earlier, provenance_ij)
        else:
            source, target, prov = (earlier, later, provenance_ij) if forward else (later, earlier, provenance_ji)
        self.add_edge(source, target, prov)

    def has_edge(self, source: int, target: int) -> bool:
        return (source, target) in self.edges

    def neighbors(self, node: int) -> List[int]:
        """Targets of edges leaving node, self included, ascending."""
        return sorted(target for source, target in self.edges if source == node)

    def index_of(self, node: int) -> int:
        """Row of a turn in adjacency() and in turn-level feature matrices."""
        if node not in self.resolved_turns:
            raise GraphError(f"turn {node} is not a node of the graph at turn {self.current_turn}")
        return self.nodes.index(node)

    def turn_tokens(self, node: int) -> Tuple[str, ...]:
        return self.resolved_turns[node].tokens

    def cross_edges(self) -> List[Edge]:
        return sorted(edge for edge in self.edges if edge[0] != edge[1])

    def validate(self):
        """
        Check structural invariants.

        Raises:
            GraphError: missing self-loop, asymmetric BiDirect edge, forward
                TODirect edge, or a cross edge without provenance
        """
        for node in self.nodes:
            if (node, node) not in self.edges:
                raise GraphError(f"node {node} lacks its self-loop")
        for source, target in self.cross_edges():
            if self.config.direction == BIDIRECT and (target, source) not in self.edges:
                raise GraphError(f"BiDirect edge {source}->{target} has no reverse")
            if (self.config.direction == TODIRECT and not self.config.forward_todirect
                    and target >= source):
                raise GraphError(f"TODirect edge {source}->{target} does not point backward")
            if self.config.semantics == COMPOSITIONAL and not self.edge_provenance.get((source, target)):
                raise GraphError(f"edge {source}->{target} has no provenance")


def _turn_sequence(context: DialogueContext, question: DialogueTurn) -> List[DialogueTurn]:
    t = question.turn_index
    for turn in context.turns:
        if turn.turn_index >= t:
            raise GraphError(f"context turn {turn.turn_index} is not before current turn {t}")
    # The current turn contributes its question only.
    return list(context.turns) + [question._replace(answer=())]


def build_graph(context: DialogueContext, question: DialogueTurn, cfg: GraphConfig,
                extractor: SpanExtractor, table: EmbeddingTable) -> SemanticGraph:
    """
    Compositional semantic graph of [C_t; Q_t].

    Resolves coreferences over the context and question, extracts spans per
    turn, adds a self-loop per turn, then connects turns that own a pair of
    similar spans. Every cross edge records the span pairs that created it.
    """
    resolved = extractor.resolve_coreferences(_turn_sequence(context, question))
    span_map = {turn.turn_index: extractor.extract_spans(turn) for turn in resolved}
    matcher = SpanMatcher(table, cfg.tau)
    graph = SemanticGraph(question.turn_index, cfg, resolved, span_map, matcher)

    all_spans = [span for turn in resolved for span in span_map[turn.turn_index]]
    for a, s_i in enumerate(all_spans):
        for s_j in all_spans[a + 1:]:
            if s_i.turn_index == s_j.turn_index or not matcher(s_i, s_j):
                continue
            graph._connect(s_i.turn_index, s_j.turn_index, (s_i, s_j), (s_j, s_i))
    return graph


def build_global_graph(context: DialogueContext, question: DialogueTurn, cfg: GraphConfig,
                       extractor: SpanExtractor, table: EmbeddingTable) -> SemanticGraph:
    """
    Global semantic graph: turns connect when their whole-turn mean
    embeddings have cosine >= tau. Spans are still extracted for oracle scoring.
    """
    resolved = extractor.resolve_coreferences(_turn_sequence(context, question))
    span_map = {turn.turn_index: extractor.extract_spans(turn) for turn in resolved}
    graph = SemanticGraph(question.turn_index, cfg, resolved, span_map, SpanMatcher(table, cfg.tau))
    graph.turn_vectors = {turn.turn_index: table.mean_vector(turn.tokens) for turn in resolved}

    for a, turn_i in enumerate(resolved):
        for turn_j in resolved[a + 1:]:
            same_text = turn_i.tokens == turn_j.tokens
            score = cosine(graph.turn_vectors[turn_i.turn_index], graph.turn_vectors[turn_j.turn_index])
            if same_text or score >= cfg.tau:
                graph._connect(turn_i.turn_index, turn_j.turn_index)
    return graph


def build_fully_connected(context: DialogueContext, question: DialogueTurn,
                          cfg: Optional[GraphConfig] = None,
                          extractor: Optional[SpanExtractor] = None,
                          table: Optional[EmbeddingTable] = None) -> SemanticGraph:
    """Every pair of distinct turns connected (per direction mode), plus self-loops."""
    cfg = cfg or GraphConfig(semantics=FULLY_CONNECTED)
    turns = _turn_sequence(context, question)
    if extractor is not None:
        turns = extractor.resolve_coreferences(turns)
        span_map = {turn.turn_index: extractor.extract_spans(turn) for turn in turns}
    else:
        span_map = None
    matcher = SpanMatcher(table, cfg.tau) if table is not None else None
    graph = SemanticGraph(question.turn_index, cfg, turns, span_map, matcher)
    for a, i in enumerate(graph.nodes):
        for j in graph.nodes[a + 1:]:
            graph._connect(i, j)
    return graph


def construct_graph(context: DialogueContext, question: DialogueTurn, cfg: GraphConfig,
                    extractor: SpanExtractor, table: EmbeddingTable) -> SemanticGraph:
    """Build the graph variant named by cfg.semantics."""
    cfg.validate()
    if cfg.semantics == COMPOSITIONAL:
        return build_graph(context, question, cfg, extractor, table)
    if cfg.semantics == GLOBAL:
        return build_global_graph(context, question, cfg, extractor, table)
    return build_fully_connected(context, question, cfg, extractor, table)


def adjacency(graph: SemanticGraph) -> np.ndarray:
    """A[i, j] = 1 iff <nodes[i], nodes[j]> is an edge; the diagonal is all ones."""
    size = len(graph.nodes)
    matrix = np.zeros((size, size), dtype=np.int64)
    for source, target in graph.edges:
        matrix[graph.index_of(source), graph.index_of(target)] = 1
    return matrix


def turn_adjacency(graph: SemanticGraph, max_turns: int) -> np.ndarray:
    """Adjacency indexed directly by 1-based turn number, shape (max_turns+1, max_turns+1)."""
    matrix = np.zeros((max_turns + 1, max_turns + 1), dtype=bool)
    for source, target in graph.edges:
        if source > max_turns or target > max_turns:
            raise GraphError(f"edge {source}->{target} exceeds maximum turn {max_turns}")
        matrix[source, target] = True
    return matrix


def graph_to_dict(graph: SemanticGraph, dialogue_id: str = "") -> dict:
    """JSON-ready view of a graph including adjacency rows and provenance."""
    return {
        "dialogue": dialogue_id,
        "turn": graph.current_turn,
        "config": graph.config._asdict(),
        "nodes": list(graph.nodes),
        "edges": [list(edge) for edge in sorted(graph.edges)],
        "adjacency": adjacency(graph).tolist(),
        "adjacency_rows": {str(node): graph.neighbors(node) for node in graph.nodes},
        "spans": {
            str(node): [{"tokens": list(span.tokens), "kind": span.kind} for span in graph.span_map.get(node, [])]
            for node in graph.nodes
        },
        "provenance": [
            {"edge": list(edge), "pairs": [[a.text, b.text] for a, b in pairs]}
            for edge, pairs in sorted(graph.edge_provenance.items())
        ],
    }


def graph_to_dot(graph: SemanticGraph, dialogue_id: str = "") -> str:
    """Graphviz DOT view; cross edges are labelled with their first provenance pair."""
    name = (dialogue_id or "dialogue").replace('"', "'")
    lines = [f'digraph "{name}_t{graph.current_turn}" {{']
    for node in graph.nodes:
        label = " ".join(graph.turn_tokens(node)).replace('"', "'")
        shape = "doublecircle" if node == graph.current_turn else "circle"
        lines.append(f'  {node} [shape={shape}, tooltip="{label}"];')
    for source, target in sorted(graph.edges):
        pairs = graph.edge_provenance.get((source, target))
        if pairs:
            label = f"{pairs[0][0].text} ~ {pairs[0][1].text}".replace('"', "'")
            lines.append(f'  {source} -> {target} [label="{label}"];')
        else:
            lines.append(f'  {source} -> {target};')
    lines.append("}")
    return "\n".join(lines)
