import numpy as np
import pytest

from core.errors import CheckpointError, ValidationError
from neural.gradcheck import gradcheck
from neural.layers import (Dropout, Embedding, LayerNorm, Linear, MultiHeadAttention, TransformerBlock, causal_mask,
                           transformer_block)
from neural.tensor import Tensor

TOLERANCE = 1e-4
GRADCHECK_EPS = 1e-6
INSTANCES = 20


def _input(rng, *shape, grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=grad)


def test_linear_shapes_and_parameters(rng):
    layer = Linear(4, 3, rng)
    assert layer(_input(rng, 5, 4)).shape == (5, 3)
    assert [name for name, _ in layer.named_parameters()] == ["weight", "bias"]
    assert layer.num_parameters() == 15
    assert Linear(4, 3, rng, bias=False).num_parameters() == 12
    with pytest.raises(ValidationError):
        layer(_input(rng, 5, 3))


def test_embedding_lookup(rng):
    table = Embedding(6, 4, rng)
    out = table([0, 5, 5])
    assert out.shape == (3, 4)
    assert np.array_equal(out.data[1], table.weight.data[5])
    with pytest.raises(ValidationError):
        table([6])


def test_layer_norm_normalizes(rng):
    norm = LayerNorm(6)
    out = norm(_input(rng, 3, 6)).data
    assert np.allclose(out.mean(axis=-1), 0.0)
    assert np.allclose(out.std(axis=-1), 1.0, atol=1e-4)


def test_dropout_modes():
    dropout = Dropout(0.5, np.random.default_rng(0))
    x = Tensor(np.ones((200,)))
    out = dropout(x).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert 0 < (out == 0).sum() < 200
    dropout.eval()
    assert dropout(x) is x
    assert Dropout(0.0, np.random.default_rng(0))(x) is x


def test_attention_respects_mask(rng):
    attention = MultiHeadAttention(8, 2, rng)
    x = _input(rng, 4, 8, grad=False)
    mask = causal_mask(4)
    attention(x, x, x, mask)
    weights = attention.last_weights
    assert weights.shape == (2, 4, 4)
    assert np.all(weights[:, mask] < 1e-12)
    assert np.allclose(weights.sum(axis=-1), 1.0)
    assert np.allclose(weights[:, 0, 0], 1.0)


def test_attention_rejects_bad_shapes(rng):
    with pytest.raises(ValidationError):
        MultiHeadAttention(8, 3, rng)
    attention = MultiHeadAttention(8, 2, rng)
    with pytest.raises(ValidationError):
        attention(_input(rng, 2, 8), _input(rng, 3, 8), _input(rng, 2, 8))
    with pytest.raises(ValidationError):
        attention(_input(rng, 2, 6), _input(rng, 2, 8), _input(rng, 2, 8))


@pytest.mark.parametrize("seed", range(INSTANCES))
def test_attention_gradients(seed):
    rng = np.random.default_rng(seed)
    attention = MultiHeadAttention(4, 2, rng)
    query = _input(rng, int(rng.integers(1, 4)), 4)
    memory = _input(rng, int(rng.integers(2, 6)), 4)
    mask = rng.random((query.shape[0], memory.shape[0])) < 0.3
    mask[:, 0] = False
    weights = rng.standard_normal(query.shape)

    def loss():
        return (attention(query, memory, memory, mask) * weights).sum()

    errors = gradcheck(loss, [query, memory] + attention.parameters(), eps=GRADCHECK_EPS)
    assert max(errors.values()) < TOLERANCE, errors


@pytest.mark.parametrize("seed", range(INSTANCES))
def test_transformer_block_gradients(seed):
    rng = np.random.default_rng(seed)
    block = TransformerBlock(4, 2, rng, dropout=0.0, ff_multiplier=2)
    query = _input(rng, int(rng.integers(1, 4)), 4)
    memory = _input(rng, int(rng.integers(1, 4)), 4)
    weights = rng.standard_normal(query.shape)

    def loss():
        return (transformer_block(query, memory, memory, block) * weights).sum()

    assert transformer_block(query, memory, memory, block).shape == query.shape
    errors = gradcheck(loss, [query, memory] + block.parameters(), eps=GRADCHECK_EPS)
    assert max(errors.values()) < TOLERANCE, errors


def test_attention_has_no_key_bias(rng):
    attention = MultiHeadAttention(8, 2, rng)
    assert attention.w_key.bias is None
    names = [name for name, _ in attention.named_parameters()]
    assert "w_key.weight" in names and "w_key.bias" not in names
    assert attention.num_parameters() == 4 * 8 * 8 + 3 * 8


def test_train_eval_propagates(rng):
    block = TransformerBlock(4, 2, rng, dropout=0.3)
    block.eval()
    assert not block.dropout.training
    assert not block.attention.w_query.training
    block.train()
    assert block.feed_forward.first.training


def test_state_dict_round_trip(rng):
    source = TransformerBlock(4, 2, rng)
    target = TransformerBlock(4, 2, np.random.default_rng(99))
    target.load_state_dict(source.state_dict())
    for (name, a), (_, b) in zip(source.named_parameters(), target.named_parameters()):
        assert np.array_equal(a.data, b.data), name


def test_load_state_dict_errors(rng):
    layer = Linear(2, 2, rng)
    with pytest.raises(CheckpointError):
        layer.load_state_dict({"weight": np.zeros((2, 2))})
    with pytest.raises(CheckpointError):
        layer.load_state_dict({"weight": np.zeros((3, 2)), "bias": np.zeros(2)})


def test_causal_mask():
    assert causal_mask(3).tolist() == [[False, True, True], [False, False, True], [False, False, False]]
