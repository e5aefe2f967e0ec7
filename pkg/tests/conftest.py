"""
Shared pytest fixtures for dialpath.
"""

import io
import json
import os
import sys

import numpy as np
import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from core.dialogue import Vocabulary, load_corpus
from core.embeddings import EmbeddingTable
from core.examples import ExampleBuilder
from core.semantic_graph import GraphConfig
from core.span_extractor import RuleBasedSpanExtractor, load_span_config
from neural.params import ModelParams
from utils.logger import Logger

FIXTURES = os.path.join(PROJECT_ROOT, "data", "fixtures")
LIVING_ROOM_CORPUS = os.path.join(FIXTURES, "living_room.jsonl")
LIVING_ROOM_EXPECTED = os.path.join(FIXTURES, "living_room_expected.json")


@pytest.fixture
def log_stream():
    return io.StringIO()


@pytest.fixture
def logger(log_stream):
    return Logger(verbose=True, use_colors=False, stream=log_stream)


@pytest.fixture(scope="session")
def living_room_corpus():
    return load_corpus(LIVING_ROOM_CORPUS)


@pytest.fixture(scope="session")
def living_room_dialogue(living_room_corpus):
    return living_room_corpus.get("living_room")


@pytest.fixture(scope="session")
def living_room_expected():
    with open(LIVING_ROOM_EXPECTED, 'r', encoding='utf-8') as f:
        return json.load(f)


@pytest.fixture(scope="session")
def span_config():
    return load_span_config()


@pytest.fixture(scope="session")
def extractor(span_config):
    return RuleBasedSpanExtractor(span_config)


@pytest.fixture(scope="session")
def table():
    return EmbeddingTable(64)


@pytest.fixture(scope="session")
def graph_config():
    return GraphConfig()


@pytest.fixture(scope="session")
def living_room_vocab(living_room_corpus):
    return Vocabulary.from_corpus(living_room_corpus)


@pytest.fixture(scope="session")
def living_room_example(living_room_dialogue, extractor, table, graph_config, living_room_vocab):
    builder = ExampleBuilder(extractor, table, graph_config, living_room_vocab)
    return builder.build(living_room_dialogue, 5, seed=7)


@pytest.fixture
def tiny_params():
    return ModelParams(d=8, heads=2, dropout=0.0, max_turns=10, ff_multiplier=2,
                       gcn_layers=1, decoder_layers=1, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
