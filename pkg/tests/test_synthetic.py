import os

import numpy as np
import pytest

from core.dialogue import Vocabulary, context_at, load_corpus
from core.embeddings import EmbeddingTable
from core.errors import ConfigError
from core.examples import ExampleBuilder, example_rng
from core.oracle_path import select_ground_truth
from core.semantic_graph import GraphConfig
from harness.synthetic import (PLACEHOLDER_TOKENS, SyntheticCorpusConfig, gen_synthetic_corpus, gold_path_records,
                               oracle_recovery, synthetic_vocabulary, write_synthetic_corpus)
from utils.container import read_container
from utils.output_writer import OutputWriter

SMALL = SyntheticCorpusConfig(n_dialogues=30, val_dialogues=6, hop_probs=(1 / 3, 1 / 3, 1 / 3), seed=11)


@pytest.fixture(scope="module")
def small_corpus():
    return gen_synthetic_corpus(SMALL)


def _final_examples(corpus, extractor):
    builder = ExampleBuilder(extractor, EmbeddingTable(64), GraphConfig(), Vocabulary.from_corpus(corpus))
    return builder.build_corpus(corpus, "final", seed=SMALL.seed)


def test_generation_is_deterministic(small_corpus):
    again = gen_synthetic_corpus(SMALL)
    assert again.train == small_corpus.train
    assert again.val == small_corpus.val
    assert again.gold_paths == small_corpus.gold_paths
    assert all(np.array_equal(again.grids[key], small_corpus.grids[key]) for key in small_corpus.grids)


def test_seed_changes_corpus(small_corpus):
    assert gen_synthetic_corpus(SMALL._replace(seed=12)).train != small_corpus.train


def test_split_sizes_and_ids(small_corpus):
    assert len(small_corpus.train) == 30
    assert len(small_corpus.val) == 6
    assert [d.id for d in small_corpus.val][0] == "syn00030"
    assert SyntheticCorpusConfig(n_dialogues=10).n_val == 2


def test_dialogue_shape(small_corpus):
    for dialogue in list(small_corpus.train) + list(small_corpus.val):
        assert SMALL.min_turns <= dialogue.num_turns <= SMALL.max_turns
        path = small_corpus.gold_paths[dialogue.id]
        assert path.current_turn == dialogue.num_turns
        assert small_corpus.hops[dialogue.id] == len(path.turns)
        path.validate()
        assert small_corpus.grids[dialogue.video_ref].shape == (SMALL.grid_rows, SMALL.grid_dim)


def test_every_hop_count_appears(small_corpus):
    assert set(small_corpus.hops.values()) == {1, 2, 3}


def test_single_hop_only(extractor):
    cfg = SyntheticCorpusConfig(n_dialogues=8, val_dialogues=0, hop_probs=(1.0, 0.0, 0.0), min_turns=3,
                                max_turns=5, seed=2)
    corpus = gen_synthetic_corpus(cfg)
    for dialogue in corpus.train:
        assert corpus.gold_paths[dialogue.id].turns == (dialogue.num_turns,)


def test_tokens_stay_in_vocabulary(small_corpus):
    allowed = set(synthetic_vocabulary(SMALL))
    assert not allowed & PLACEHOLDER_TOKENS
    assert len(allowed) <= SMALL.vocab_size
    for dialogue in small_corpus.train:
        for turn in dialogue.turns:
            assert set(turn.tokens) <= allowed


@pytest.mark.parametrize("changes", [
    {"hop_probs": (0.5, 0.5, 0.5)},
    {"hop_probs": (0.5, 0.5)},
    {"min_turns": 2, "max_turns": 4},
    {"entity_pool": 1},
    {"entity_pool": 41},
    {"vocab_size": 20},
    {"grid_rows": 1},
    {"distractor_rate": 1.5},
    {"max_turns": 11},
    {"n_dialogues": 0},
])
def test_infeasible_configs_rejected(changes):
    with pytest.raises(ConfigError):
        gen_synthetic_corpus(SyntheticCorpusConfig(**changes))


def test_oracle_recovers_planted_paths(small_corpus, extractor, logger):
    examples = _final_examples(small_corpus.train, extractor)
    assert oracle_recovery(examples, small_corpus.gold_paths, logger) >= 0.9


def test_oracle_recovery_reports_misses(small_corpus, extractor, logger, log_stream):
    examples = _final_examples(small_corpus.train, extractor)[:2]
    broken = [examples[0]._replace(ties=examples[0].candidates)] + examples[1:]
    if len(examples[0].candidates) == 1:
        broken[0] = examples[0]._replace(ties=())
    assert oracle_recovery(broken, small_corpus.gold_paths, logger) <= 0.5
    assert "not recovered" in log_stream.getvalue()
    assert oracle_recovery([], small_corpus.gold_paths) == 0.0


def test_write_corpus(tmp_path, small_corpus, logger):
    out_dir = str(tmp_path / "syn")
    write_synthetic_corpus(small_corpus, out_dir, OutputWriter(logger))
    assert load_corpus(os.path.join(out_dir, "train.jsonl")) == small_corpus.train
    assert load_corpus(os.path.join(out_dir, "val.jsonl")) == small_corpus.val
    arrays, meta = read_container(os.path.join(out_dir, "grids.dpc"))
    assert meta == {"kind": "visual-grids"}
    assert set(arrays) == set(small_corpus.grids)
    with open(os.path.join(out_dir, "gold_paths.jsonl"), encoding="utf-8") as f:
        assert sum(1 for _ in f) == 36


def test_gold_path_records(small_corpus):
    records = gold_path_records(small_corpus)
    assert len(records) == 36
    first = records[0]
    assert set(first) == {"dialogue", "split", "turn", "path", "hops"}
    assert first["split"] == "train" and records[-1]["split"] == "val"
    assert first["path"][0] == first["turn"]
    assert first["hops"] == len(first["path"])


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_builder_gold_matches_oracle_selection(small_corpus, extractor, seed):
    table = EmbeddingTable(64)
    builder = ExampleBuilder(extractor, table, GraphConfig(), Vocabulary.from_corpus(small_corpus.train))
    for position, dialogue in enumerate(small_corpus.train):
        for t in range(1, dialogue.num_turns + 1):
            example = builder.build(dialogue, t, seed, position)
            context, _ = context_at(dialogue, t)
            resolved = extractor.resolve_coreferences(list(context.turns) + [dialogue.turn(t)])
            spans = extractor.extract_token_spans(resolved[-1].answer, t)
            expected = select_ground_truth(list(example.candidates), spans, example.graph,
                                           example_rng(seed, position, t))
            assert example.gold_path == expected
            assert example.gold_path in example.ties
