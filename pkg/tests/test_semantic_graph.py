import pytest

from core.dialogue import DialogueContext, DialogueTurn, context_at
from core.errors import ConfigError, GraphError
from core.semantic_graph import (FULLY_CONNECTED, GLOBAL, TODIRECT, GraphConfig, adjacency, build_fully_connected,
                                 construct_graph, graph_to_dict, graph_to_dot, turn_adjacency)


def _living_room_graph(living_room_dialogue, extractor, table, cfg=None, t=5):
    context, question = context_at(living_room_dialogue, t)
    return construct_graph(context, question, cfg or GraphConfig(), extractor, table)


def test_living_room_compositional_graph(living_room_dialogue, living_room_expected, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table)
    graph.validate()
    assert graph.nodes == [1, 2, 3, 4, 5]
    assert [list(edge) for edge in graph.cross_edges()] == living_room_expected["cross_edges"]
    assert graph.neighbors(5) == living_room_expected["adjacency_row_5"]


def test_current_turn_contributes_question_only(living_room_dialogue, living_room_expected, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table)
    assert " ".join(graph.turn_tokens(5)) == living_room_expected["resolved_turns"]["5"]
    spans = [[span.text, span.kind] for span in graph.span_map[5]]
    assert spans == living_room_expected["spans"]["5"]


def test_provenance_names_matching_spans(living_room_dialogue, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table)
    pairs = {(a.text, b.text) for a, b in graph.edge_provenance[(5, 4)]}
    assert ("cushion", "cushion") in pairs
    assert all(a.turn_index == 5 and b.turn_index == 4 for a, b in graph.edge_provenance[(5, 4)])


def test_todirect_points_backward(living_room_dialogue, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table, GraphConfig(direction=TODIRECT))
    graph.validate()
    assert graph.cross_edges() == [(4, 2), (5, 2), (5, 4)]


def test_forward_todirect_debug_mode(living_room_dialogue, extractor, table):
    cfg = GraphConfig(direction=TODIRECT, forward_todirect=True)
    graph = _living_room_graph(living_room_dialogue, extractor, table, cfg)
    graph.validate()
    assert graph.cross_edges() == [(2, 4), (2, 5), (4, 5)]


def test_first_turn_graph_is_single_self_loop(living_room_dialogue, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table, t=1)
    assert graph.nodes == [1]
    assert graph.edges == {(1, 1)}
    assert adjacency(graph).tolist() == [[1]]


def test_adjacency_has_unit_diagonal(living_room_dialogue, extractor, table):
    matrix = adjacency(_living_room_graph(living_room_dialogue, extractor, table))
    assert matrix.shape == (5, 5)
    assert all(matrix[i, i] == 1 for i in range(5))
    assert (matrix == matrix.T).all()


def test_turn_adjacency(living_room_dialogue, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table)
    matrix = turn_adjacency(graph, 10)
    assert matrix.shape == (11, 11)
    assert matrix[5, 4] and matrix[5, 2] and not matrix[5, 3]
    with pytest.raises(GraphError):
        turn_adjacency(graph, 4)


def test_fully_connected(living_room_dialogue, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table, GraphConfig(semantics=FULLY_CONNECTED))
    assert len(graph.cross_edges()) == 20
    assert adjacency(graph).all()


def test_fully_connected_without_extractor():
    context = DialogueContext((DialogueTurn(1, ("hi", "?")), DialogueTurn(2, ("why", "?"))))
    graph = build_fully_connected(context, DialogueTurn(3, ("ok", "?")))
    assert graph.cross_edges() == [(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)]
    assert graph.matcher is None


def test_global_graph_is_symmetric_with_self_loops(living_room_dialogue, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table, GraphConfig(semantics=GLOBAL))
    graph.validate()
    assert set(graph.turn_vectors) == {1, 2, 3, 4, 5}
    assert all(graph.has_edge(node, node) for node in graph.nodes)


def test_global_graph_at_zero_threshold_connects_everything(living_room_dialogue, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table, GraphConfig(semantics=GLOBAL, tau=-1.0))
    assert len(graph.cross_edges()) == 20


def test_unknown_semantics_rejected(living_room_dialogue, extractor, table):
    with pytest.raises(ConfigError):
        _living_room_graph(living_room_dialogue, extractor, table, GraphConfig(semantics="dense"))
    with pytest.raises(ConfigError):
        _living_room_graph(living_room_dialogue, extractor, table, GraphConfig(direction="sideways"))


def test_context_after_current_turn_rejected(extractor, table):
    context = DialogueContext((DialogueTurn(3, ("hi", "?")),))
    with pytest.raises(GraphError):
        construct_graph(context, DialogueTurn(2, ("why", "?")), GraphConfig(), extractor, table)


def test_index_of_unknown_node(living_room_dialogue, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table, t=3)
    assert graph.index_of(3) == 2
    with pytest.raises(GraphError):
        graph.index_of(4)


def test_views(living_room_dialogue, extractor, table):
    graph = _living_room_graph(living_room_dialogue, extractor, table)
    record = graph_to_dict(graph, "living_room")
    assert record["adjacency_rows"]["5"] == [2, 4, 5]
    assert record["config"]["semantics"] == "compositional"
    assert {tuple(p["edge"]) for p in record["provenance"]} == {(2, 4), (2, 5), (4, 2), (4, 5), (5, 2), (5, 4)}
    dot = graph_to_dot(graph, "living_room")
    assert dot.startswith('digraph "living_room_t5" {')
    assert "5 [shape=doublecircle" in dot
    assert "5 -> 4 [label=" in dot
    assert "3 -> 3;" in dot
