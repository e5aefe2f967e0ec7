import numpy as np
import pytest

from core.embeddings import (ZERO, EmbeddingTable, SpanMatcher, cosine, embed_span, hashed_vector, is_similar,
                             load_vectors)
from core.errors import ConfigError, EmbeddingFormatError, ValidationError
from core.span_extractor import ENTITY, LexicalSpan


def _span(*tokens):
    return LexicalSpan(1, tuple(tokens), ENTITY)


@pytest.fixture
def vector_file(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("3 2\ncup 1.0 0.0\nmug 0.9 0.1\nsofa 0.0 1.0\n", encoding="utf-8")
    return str(path)


def test_hashed_vector_is_deterministic_unit():
    a = hashed_vector("cushion", 32)
    assert np.array_equal(a, hashed_vector("cushion", 32))
    assert np.isclose(np.linalg.norm(a), 1.0)
    assert not np.array_equal(a, hashed_vector("sofa", 32))


def test_load_vectors_with_header(vector_file):
    table = load_vectors(vector_file)
    assert table.dim == 2
    assert len(table) == 3
    assert np.allclose(table.vector("mug"), [0.9, 0.1])


def test_load_vectors_rejects_ragged_rows(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("cup 1.0 0.0\nmug 0.9\n", encoding="utf-8")
    with pytest.raises(EmbeddingFormatError) as info:
        load_vectors(str(path))
    assert info.value.line_number == 2


def test_load_vectors_rejects_bad_float(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("cup 1.0 abc\n", encoding="utf-8")
    with pytest.raises(EmbeddingFormatError):
        load_vectors(str(path))


def test_load_vectors_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("", encoding="utf-8")
    with pytest.raises(EmbeddingFormatError):
        load_vectors(str(path))


def test_oov_strategies(vector_file):
    hashed = load_vectors(vector_file)
    assert np.isclose(np.linalg.norm(hashed.vector("zebra")), 1.0)
    zero = load_vectors(vector_file, oov_strategy=ZERO)
    assert not zero.vector("zebra").any()


def test_table_validates_arguments():
    with pytest.raises(ConfigError):
        EmbeddingTable(0)
    with pytest.raises(ConfigError):
        EmbeddingTable(4, oov_strategy="nearest")
    with pytest.raises(ValidationError):
        EmbeddingTable(2, {"cup": np.array([1.0, np.nan])})


def test_mean_vector_ignores_token_order(table):
    assert np.array_equal(table.mean_vector(["living", "room"]), table.mean_vector(["room", "living"]))
    assert not table.mean_vector([]).any()


def test_cosine():
    assert cosine([1.0, 0.0], [2.0, 0.0]) == pytest.approx(1.0)
    assert cosine([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.0)
    assert cosine([0.0, 0.0], [1.0, 1.0]) == 0.0
    with pytest.raises(ValidationError):
        cosine([1.0], [1.0, 0.0])


def test_is_similar_threshold(vector_file):
    table = load_vectors(vector_file)
    assert is_similar(_span("cup"), _span("mug"), 0.6, table)
    assert not is_similar(_span("cup"), _span("sofa"), 0.6, table)
    assert not is_similar(_span("cup"), _span("mug"), 0.999, table)


def test_identical_spans_always_match():
    table = EmbeddingTable(4, oov_strategy=ZERO)
    assert is_similar(_span("teapot"), _span("teapot"), 1.0, table)


def test_span_matcher(vector_file):
    matcher = SpanMatcher(load_vectors(vector_file), tau=0.6)
    assert matcher.any_match(_span("mug"), [_span("sofa"), _span("cup")])
    assert not matcher.any_match(_span("mug"), [_span("sofa")])
    assert np.allclose(embed_span(_span("cup", "sofa"), matcher.table), [0.5, 0.5])
