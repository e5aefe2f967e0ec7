"""
Training examples for dialpath models.

One TurnExample bundles everything the path generator and the propagation
model need for a (dialogue, turn): encoded question and context, the
semantic graph, the path candidates with their oracle tie set, and the
encoded answer.
"""

from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.dialogue import Corpus, Dialogue, Vocabulary, context_at
from core.embeddings import EmbeddingTable
from core.errors import ValidationError
from core.oracle_path import (COVERAGE, ReasoningPath, enumerate_paths, global_tied_candidates,
                              resolve_oracle_mode, select_ground_truth, select_ground_truth_global,
                              tied_candidates)
from core.semantic_graph import GraphConfig, SemanticGraph, construct_graph
from core.span_extractor import SpanExtractor

FINAL_TURN = "final"
ALL_TURNS = "all"

# Turn index attached to the BOS token of an empty context.
NO_TURN = 0


class TurnExample(NamedTuple):
    """Model-ready view of one (dialogue, turn)."""
    dialogue_id: str
    turn: int
    question_ids: Tuple[int, ...]
    context_ids: Tuple[int, ...]
    context_turns: Tuple[int, ...]
    graph: SemanticGraph
    candidates: Tuple[ReasoningPath, ...]
    ties: Tuple[ReasoningPath, ...]
    gold_path: ReasoningPath
    coverage: int
    answer_ids: Tuple[int, ...]
    answer_tokens: Tuple[str, ...]
    node_token_ids: Dict[int, Tuple[int, ...]]
    video_ref: Optional[str] = None

    def sample_gold(self, rng: np.random.Generator) -> ReasoningPath:
        """Uniform pick among the oracle ties; the fixed gold path when there is no tie."""
        if len(self.ties) <= 1:
            return self.gold_path
        return self.ties[int(rng.integers(len(self.ties)))]


def example_rng(seed: int, position: int, turn: int) -> np.random.Generator:
    """Per-example generator so tie-breaks do not depend on processing order."""
    return np.random.default_rng([seed, position, turn])


class ExampleBuilder:
    """Turns dialogues into TurnExamples under one graph and oracle configuration."""

    def __init__(self, extractor: SpanExtractor, table: EmbeddingTable, graph_config: GraphConfig,
                 vocab: Vocabulary, oracle_mode: str = "auto", logger=None):
        """
        Initialize the builder.

        Args:
            extractor: Coreference + span backend
            table: Word vectors for similarity
            graph_config: Graph variant
            vocab: Token ids for model inputs
            oracle_mode: auto, coverage or global_similarity
            logger: Optional Logger
        """
        self.extractor = extractor
        self.table = table
        self.graph_config = graph_config
        self.vocab = vocab
        self.oracle_mode = resolve_oracle_mode(oracle_mode, graph_config.semantics)
        self.logger = logger

    def build(self, dialogue: Dialogue, t: int, seed: int = 0, position: int = 0) -> TurnExample:
        """
        Build the example of dialogue at turn t.

        Args:
            dialogue: Source dialogue
            t: Current turn (1-based)
            seed: Run seed for the oracle tie-break
            position: Index of the dialogue in its corpus

        Returns:
            TurnExample with the selected ground-truth path
        """
        context, question = context_at(dialogue, t)
        if not question.question:
            raise ValidationError(f"dialogue {dialogue.id}: turn {t} has an empty question")
        graph = construct_graph(context, question, self.graph_config, self.extractor, self.table)
        candidates = enumerate_paths(graph, t)

        full_turn = dialogue.turn(t)
        resolved = self.extractor.resolve_coreferences(list(context.turns) + [full_turn])
        answer_tokens = resolved[-1].answer
        rng = example_rng(seed, position, t)
        if self.oracle_mode == COVERAGE:
            answer_spans = self.extractor.extract_token_spans(answer_tokens, t)
            ties, coverage = tied_candidates(candidates, answer_spans, graph)
            gold = select_ground_truth(candidates, answer_spans, graph, rng)
        else:
            ties = global_tied_candidates(candidates, answer_tokens, graph, self.table)
            coverage = 0
            gold = select_ground_truth_global(candidates, answer_tokens, graph, self.table, rng)

        context_ids: List[int] = []
        context_turns: List[int] = []
        for turn in context.turns:
            ids = self.vocab.encode(turn.tokens)
            context_ids.extend(ids)
            context_turns.extend([turn.turn_index] * len(ids))
        if not context_ids:
            context_ids, context_turns = [self.vocab.bos_id], [NO_TURN]

        return TurnExample(
            dialogue_id=dialogue.id,
            turn=t,
            question_ids=tuple(self.vocab.encode(question.question)),
            context_ids=tuple(context_ids),
            context_turns=tuple(context_turns),
            graph=graph,
            candidates=tuple(candidates),
            ties=tuple(ties),
            gold_path=gold,
            coverage=coverage,
            answer_ids=tuple(self.vocab.encode(full_turn.answer)),
            answer_tokens=full_turn.answer,
            node_token_ids={node: tuple(self.vocab.encode(graph.turn_tokens(node))) for node in graph.nodes},
            video_ref=dialogue.video_ref,
        )

    def build_corpus(self, corpus: Corpus, turns: str = FINAL_TURN, seed: int = 0) -> List[TurnExample]:
        """
        Build examples for a corpus.

        Args:
            corpus: Dialogues
            turns: 'final' (last turn of each dialogue) or 'all' (every turn)
            seed: Run seed

        Returns:
            Examples in corpus order, turns ascending
        """
        if turns not in (FINAL_TURN, ALL_TURNS):
            raise ValidationError(f"unknown turn selection '{turns}'")
        examples = []
        for position, dialogue in enumerate(corpus):
            selected: Sequence[int] = (
                [dialogue.num_turns] if turns == FINAL_TURN else range(1, dialogue.num_turns + 1)
            )
            for t in selected:
                examples.append(self.build(dialogue, t, seed, position))
        if self.logger:
            self.logger.log_info(f"Built {len(examples)} examples from {len(corpus)} dialogues")
        return examples
