import numpy as np
import pytest

from core.dialogue import Vocabulary
from core.errors import ValidationError
from core.examples import ExampleBuilder
from core.oracle_path import ReasoningPath
from core.path_generator import PathGeneratorModel, path_loss
from core.propagation import (GCNLayer, PropagationModel, VisualFeatureGrid, answer_loss, gather_path_rows,
                              gcn_update, generate_answer, grid_for, predict_answers, propagate, train_joint,
                              traverse_path, turn_representations, visual_attention)
from core.semantic_graph import GraphConfig
from harness.synthetic import SyntheticCorpusConfig, gen_synthetic_corpus
from neural.gradcheck import gradcheck
from neural.params import TrainingConfig
from neural.tensor import Tensor

VISUAL_DIM = 6
TOLERANCE = 1e-4
GRADCHECK_EPS = 1e-6
INSTANCES = 20


@pytest.fixture
def model(tiny_params, living_room_vocab):
    return PropagationModel(tiny_params, len(living_room_vocab), VISUAL_DIM)


@pytest.fixture
def video_example(living_room_example):
    return living_room_example._replace(video_ref="vid00000")


@pytest.fixture
def grids(rng):
    return {"vid00000": rng.standard_normal((4, VISUAL_DIM))}


def _random_adjacency(n, rng):
    adj = (rng.random((n, n)) < 0.4).astype(np.int64)
    adj = np.maximum(adj, adj.T)
    np.fill_diagonal(adj, 1)
    return adj


def test_gcn_is_permutation_equivariant():
    rng = np.random.default_rng(17)
    for _ in range(100):
        n = int(rng.integers(1, 9))
        layer = GCNLayer(4, rng)
        m = Tensor(rng.standard_normal((n, 4)))
        adj = _random_adjacency(n, rng)
        perm = rng.permutation(n)
        original = layer(m, adj).data
        permuted = layer(Tensor(m.data[perm]), adj[perm][:, perm]).data
        assert np.max(np.abs(permuted - original[perm])) <= 1e-9


@pytest.mark.parametrize("seed", range(INSTANCES))
def test_gcn_gradients(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    layer = GCNLayer(4, rng)
    m = Tensor(rng.standard_normal((n, 4)), requires_grad=True)
    adj = _random_adjacency(n, rng)
    weights = rng.standard_normal((n, 4))
    errors = gradcheck(lambda: (layer(m, adj) * weights).sum(), [m] + layer.parameters(), eps=GRADCHECK_EPS)
    assert max(errors.values()) < TOLERANCE, errors


def test_gcn_requires_self_loops(rng):
    layer = GCNLayer(4, rng)
    with pytest.raises(ValidationError):
        layer(Tensor(np.ones((2, 4))), np.array([[1, 0], [0, 0]]))


def test_turn_representations_one_row_per_node(model, living_room_example):
    v = turn_representations(living_room_example.graph, living_room_example.node_token_ids, model)
    assert v.shape == (5, model.params.d)
    with pytest.raises(ValidationError):
        turn_representations(living_room_example.graph, {1: (4,)}, model)


def test_visual_grid_validation():
    VisualFeatureGrid(np.zeros((2, 3)), "ok").validate()
    with pytest.raises(ValidationError):
        VisualFeatureGrid(np.zeros(3), "flat").validate()
    with pytest.raises(ValidationError):
        VisualFeatureGrid(np.zeros((0, 3)), "empty").validate()
    with pytest.raises(ValidationError):
        VisualFeatureGrid(np.full((1, 3), np.nan), "nan").validate()


def test_grid_lookup(living_room_example, video_example, grids):
    blank = grid_for(living_room_example, grids, VISUAL_DIM)
    assert blank.tokens.shape == (1, VISUAL_DIM) and not blank.tokens.any()
    assert grid_for(video_example, grids, VISUAL_DIM).tokens.shape == (4, VISUAL_DIM)
    with pytest.raises(ValidationError):
        grid_for(video_example, {}, VISUAL_DIM)


def test_visual_width_mismatch(model, living_room_example):
    v = turn_representations(living_room_example.graph, living_room_example.node_token_ids, model)
    with pytest.raises(ValidationError):
        visual_attention(v, VisualFeatureGrid(np.ones((2, VISUAL_DIM + 1))), model)


def test_propagation_switches(tiny_params, living_room_vocab, video_example, grids):
    model = PropagationModel(tiny_params._replace(graph_propagation=False, path_propagation=False),
                             len(living_room_vocab), VISUAL_DIM)
    m = Tensor(np.arange(40, dtype=float).reshape(5, 8))
    assert gcn_update(m, video_example.graph, model) is m
    stream = traverse_path(m, video_example.gold_path, video_example.graph, model)
    assert stream.shape == (3, 8) and not stream.data.any()


def test_gather_path_rows(living_room_example):
    m = Tensor(np.arange(10, dtype=float).reshape(5, 2))
    rows = gather_path_rows(m, ReasoningPath((5, 4, 2)), living_room_example.graph)
    assert rows.data.tolist() == [[8.0, 9.0], [6.0, 7.0], [2.0, 3.0]]


def test_propagate_shapes(model, video_example, grids):
    m_tilde, g_tilde = propagate(video_example, video_example.gold_path, model, grids)
    assert m_tilde.shape == (5, 8)
    assert g_tilde.shape == (3, 8)
    _, zero = propagate(video_example, video_example.gold_path, model, grids, zero_path_stream=True)
    assert not zero.data.any()


@pytest.mark.parametrize("seed", range(INSTANCES))
def test_answer_loss_gradients(seed, tiny_params, living_room_vocab, video_example):
    model = PropagationModel(tiny_params._replace(seed=seed), len(living_room_vocab), VISUAL_DIM)
    rng = np.random.default_rng(seed)
    grids = {"vid00000": rng.standard_normal((int(rng.integers(1, 5)), VISUAL_DIM))}

    def loss():
        value, _, _ = answer_loss(video_example, video_example.gold_path, model, living_room_vocab, grids, epsilon=0.1)
        return value

    errors = gradcheck(loss, model.parameters(), eps=GRADCHECK_EPS, max_entries=4, rng=rng)
    assert max(errors.values()) < TOLERANCE, errors


def test_answer_loss_counts_tokens(model, living_room_vocab, living_room_example):
    _, correct, count = answer_loss(living_room_example, living_room_example.gold_path, model, living_room_vocab, {})
    assert count == len(living_room_example.answer_ids) + 1
    assert 0 <= correct <= count


def test_generate_answer(model, living_room_vocab, living_room_example):
    ids = generate_answer(living_room_example, living_room_example.gold_path, model, living_room_vocab, {}, max_length=4)
    assert len(ids) <= 4
    assert living_room_vocab.pad_id not in ids and living_room_vocab.bos_id not in ids
    assert living_room_vocab.eos_id not in ids
    answers = predict_answers([living_room_example], [living_room_example.gold_path], model, living_room_vocab, {})
    assert len(answers) == 1 and all(isinstance(token, str) for token in answers[0])


@pytest.mark.slow
@pytest.mark.parametrize("regime", ["joint", "pipeline"])
def test_training_reduces_answer_loss(regime, tiny_params, living_room_vocab, living_room_example, logger):
    path_model = PathGeneratorModel(tiny_params, len(living_room_vocab))
    model = PropagationModel(tiny_params, len(living_room_vocab), VISUAL_DIM)
    cfg = TrainingConfig(epochs=25, batch_size=4, peak_lr=0.02, warmup_epochs=1, lr_decay="none",
                         label_smoothing=0.1, regime=regime, seed=3)
    result = train_joint([living_room_example] * 4, path_model, model, living_room_vocab, {}, cfg, logger)
    assert len(result.history) == 25
    assert result.history[-1]["answer_loss"] < result.history[0]["answer_loss"]
    assert not result.propagation_model.training
    if regime == "joint":
        assert result.history[-1]["path_loss"] < result.history[0]["path_loss"]
    else:
        assert all(entry["path_loss"] == 0.0 for entry in result.history)


def test_every_parameter_receives_gradient(tiny_params, extractor, table):
    corpus = gen_synthetic_corpus(
        SyntheticCorpusConfig(n_dialogues=4, val_dialogues=0, hop_probs=(0.0, 0.0, 1.0), seed=5))
    vocab = Vocabulary.from_corpus(corpus.train)
    examples = ExampleBuilder(extractor, table, GraphConfig(), vocab).build_corpus(corpus.train, seed=5)
    assert any(len(ex.gold_path.turns) == 3 for ex in examples)
    path_model = PathGeneratorModel(tiny_params, len(vocab))
    model = PropagationModel(tiny_params, len(vocab), corpus.grids[examples[0].video_ref].shape[1])

    for example in examples:
        path_loss(example, path_model)[0].backward()
        answer_loss(example, example.gold_path, model, vocab, corpus.grids, epsilon=0.1)[0].backward()

    for owner in (path_model, model):
        for name, param in owner.named_parameters():
            assert param.grad is not None and np.abs(param.grad).max() > 1e-10, name
