"""
Pipeline stages behind the dialpath command line.

Each stage reads its inputs, runs one part of the pipeline and writes JSON
or JSONL results. Stages return True on success and report failures
through the logger, so the application can map them to an exit code.
"""

import json
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from core.dialogue import Corpus, Dialogue, Vocabulary, context_at, load_corpus
from core.embeddings import EmbeddingTable, load_vectors
from core.errors import DialPathError, ValidationError
from core.examples import FINAL_TURN, ExampleBuilder, TurnExample
from core.oracle_path import ReasoningPath, score_path
from core.path_generator import (BEAM, GREEDY, PathGeneratorModel, generate_path, path_exact_match,
                                 predict_paths, train_path_generator)
from core.propagation import PropagationModel, learned_paths, predict_answers, train_joint
from core.semantic_graph import GraphConfig, graph_to_dict, graph_to_dot
from core.span_extractor import LexicalSpan, RuleBasedSpanExtractor
from harness.baselines import LAST_N, LEARNED, ORACLE, baseline_path, parse_strategy
from harness.evaluation import Prediction, evaluate
from harness.synthetic import gen_synthetic_corpus, oracle_recovery, write_synthetic_corpus
from utils.container import read_container

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURE_CORPUS = os.path.join(PROJECT_ROOT, "data", "fixtures", "living_room.jsonl")

PATH_MODEL = "path"
PROPAGATION_MODEL = "propagation"
RUN_CONFIG = "run.conf"
TAU_SWEEP = (0.4, 0.5, 0.6, 0.7, 0.8)
BEAM_CHECK = 5


class PipelineRunner:
    """Runs pipeline stages with one configuration, logger and output writer."""

    def __init__(self, logger, config_manager, writer):
        """
        Initialize the runner.

        Args:
            logger: Logger instance for output
            config_manager: Loaded ConfigManager
            writer: OutputWriter for results
        """
        self.logger = logger
        self.config_manager = config_manager
        self.writer = writer
        self._table: Optional[EmbeddingTable] = None

    # Building blocks

    def embedding_table(self) -> EmbeddingTable:
        if self._table is None:
            path = self.config_manager.get_embeddings_path()
            strategy = self.config_manager.get_oov_strategy()
            if path:
                self.logger.log_info(f"Loading word vectors from {path}")
                self._table = load_vectors(path, strategy)
                self.logger.log_info(f"Loaded {len(self._table)} vectors of dimension {self._table.dim}")
            else:
                self._table = EmbeddingTable(self.config_manager.get_embedding_dim(), None, strategy)
                self.logger.log_info(f"No word vectors configured; hashed vectors of dimension {self._table.dim}")
        return self._table

    def span_extractor(self) -> RuleBasedSpanExtractor:
        return RuleBasedSpanExtractor(self.config_manager.get_span_config())

    def example_builder(self, vocab: Vocabulary, graph_config: Optional[GraphConfig] = None) -> ExampleBuilder:
        return ExampleBuilder(self.span_extractor(), self.embedding_table(),
                              graph_config or self.config_manager.get_graph_config(), vocab,
                              self.config_manager.get_oracle_mode(), self.logger)

    @staticmethod
    def _answer_spans(builder: ExampleBuilder, dialogue: Dialogue, t: int) -> List[LexicalSpan]:
        """Spans of the coreference-resolved answer of turn t."""
        context, _ = context_at(dialogue, t)
        resolved = builder.extractor.resolve_coreferences(list(context.turns) + [dialogue.turn(t)])
        return builder.extractor.extract_token_spans(resolved[-1].answer, t)

    def read_corpus(self, path: Optional[str]) -> Corpus:
        path = path or FIXTURE_CORPUS
        max_turns = self.config_manager.get_model_params().max_turns
        corpus = load_corpus(path, max_turns=max_turns)
        self.logger.log_info(f"Loaded {len(corpus)} dialogues from {path}")
        return corpus

    def build_examples(self, corpus: Corpus, vocab: Vocabulary,
                       graph_config: Optional[GraphConfig] = None) -> List[TurnExample]:
        builder = self.example_builder(vocab, graph_config)
        return builder.build_corpus(corpus, self.config_manager.get_turns(), self.config_manager.get_seed())

    def read_grids(self, path: Optional[str], corpus_path: Optional[str] = None) -> Dict[str, np.ndarray]:
        """Visual grids from path, else from grids.dpc next to the corpus, else none."""
        if not path and corpus_path:
            sibling = os.path.join(os.path.dirname(os.path.abspath(corpus_path)), "grids.dpc")
            path = sibling if os.path.exists(sibling) else None
        if not path:
            self.logger.log_warning("No visual grids found; dialogues with a video_ref cannot be used")
            return {}
        arrays, _ = read_container(path)
        self.logger.log_info(f"Loaded {len(arrays)} visual grids from {path}")
        return arrays

    def read_gold_paths(self, path: Optional[str],
                        corpus_path: Optional[str] = None) -> Dict[Tuple[str, int], ReasoningPath]:
        """Planted paths keyed by (dialogue, turn), from path or gold_paths.jsonl next to the corpus."""
        if not path and corpus_path:
            sibling = os.path.join(os.path.dirname(os.path.abspath(corpus_path)), "gold_paths.jsonl")
            path = sibling if os.path.exists(sibling) else None
        if not path:
            return {}
        gold = {}
        with open(path, 'r', encoding='utf-8') as f:
            for line_number, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    gold[(record["dialogue"], int(record["turn"]))] = ReasoningPath(tuple(record["path"]))
                except (ValueError, KeyError, TypeError) as e:
                    raise ValidationError(f"{path} line {line_number}: bad gold path record ({e})")
        self.logger.log_info(f"Loaded {len(gold)} gold paths from {path}")
        return gold

    def load_models(self, model_path: str) -> Tuple[Checkpoint, PathGeneratorModel, Optional[PropagationModel]]:
        """Restore the path generator and, when present, the propagation model."""
        checkpoint = load_checkpoint(model_path)
        path_model = checkpoint.restore(PATH_MODEL, PathGeneratorModel(checkpoint.params, len(checkpoint.vocab)))
        propagation = None
        if checkpoint.has_model(PROPAGATION_MODEL):
            visual_dim = int(checkpoint.meta.get("visual_dim", 1))
            propagation = checkpoint.restore(
                PROPAGATION_MODEL, PropagationModel(checkpoint.params, len(checkpoint.vocab), visual_dim))
        saved_graph = checkpoint.meta.get("graph")
        current = self.config_manager.get_graph_config()._asdict()
        if saved_graph and saved_graph != current:
            self.logger.log_warning(f"Model was trained with graph config {saved_graph}, now using {current}")
        self.logger.log_info(f"Loaded model from {model_path} ({', '.join(checkpoint.models)})")
        return checkpoint, path_model, propagation

    @staticmethod
    def select_turn(corpus: Corpus, dialogue_id: Optional[str], turn: Optional[int]) -> Tuple[Dialogue, int]:
        if not len(corpus):
            raise ValidationError("corpus is empty")
        dialogue = corpus.get(dialogue_id) if dialogue_id else next(iter(corpus))
        t = dialogue.num_turns if turn is None else turn
        if not 1 <= t <= dialogue.num_turns:
            raise ValidationError(f"dialogue {dialogue.id} has turns 1..{dialogue.num_turns}, got {t}")
        return dialogue, t

    def save_run_config(self, output: Optional[str], is_dir: bool = False):
        if not output:
            return
        directory = output if is_dir else os.path.dirname(os.path.abspath(output))
        self.config_manager.save_config(os.path.join(directory, RUN_CONFIG))

    def _model_meta(self, graph_config: GraphConfig, visual_dim: Optional[int] = None, **extra) -> dict:
        meta = {"graph": graph_config._asdict(), "oracle_mode": self.config_manager.get_oracle_mode(),
                "turns": self.config_manager.get_turns()}
        if visual_dim is not None:
            meta["visual_dim"] = visual_dim
        meta.update(extra)
        return meta

    # Stages

    def gen_corpus(self, out_dir: str) -> bool:
        """Generate a synthetic corpus and check that the oracle recovers the planted paths."""
        try:
            cfg = self.config_manager.get_synthetic_config()
            corpus = gen_synthetic_corpus(cfg, self.logger)
            write_synthetic_corpus(corpus, out_dir, self.writer)
            self.save_run_config(out_dir, is_dir=True)

            vocab = Vocabulary.from_corpus(corpus.train)
            builder = self.example_builder(vocab)
            examples = builder.build_corpus(corpus.train, FINAL_TURN, cfg.seed)
            recovery = oracle_recovery(examples, corpus.gold_paths, self.logger)
            self.logger.log_metrics("oracle recovery", {"train": recovery})
            self.writer.write_json({"output": out_dir, "train": len(corpus.train), "val": len(corpus.val),
                                    "oracle_recovery": recovery})
            return True
        except (DialPathError, OSError) as e:
            self.logger.log_error(f"Failed to generate corpus: {e}")
            return False

    def build_graph(self, corpus_path: Optional[str], dialogue_id: Optional[str], turn: Optional[int],
                    fmt: str = "json", output: Optional[str] = None) -> bool:
        try:
            corpus = self.read_corpus(corpus_path)
            dialogue, t = self.select_turn(corpus, dialogue_id, turn)
            example = self.example_builder(Vocabulary.from_corpus(corpus)).build(
                dialogue, t, self.config_manager.get_seed())
            if fmt == "dot":
                self.writer.write_text(graph_to_dot(example.graph, dialogue.id), output)
            else:
                self.writer.write_json(graph_to_dict(example.graph, dialogue.id), output)
            self.save_run_config(output)
            return True
        except (DialPathError, KeyError, OSError) as e:
            self.logger.log_error(f"Failed to build graph: {e}")
            return False

    def oracle_paths(self, corpus_path: Optional[str], output: Optional[str] = None) -> bool:
        try:
            corpus = self.read_corpus(corpus_path)
            examples = self.build_examples(corpus, Vocabulary.from_corpus(corpus))
            records = [
                {"dialogue": ex.dialogue_id, "turn": ex.turn, "path": ex.gold_path.to_list(),
                 "score": ex.coverage, "candidates": len(ex.candidates),
                 "candidate_paths": [path.to_list() for path in ex.candidates],
                 "ties": [path.to_list() for path in ex.ties]}
                for ex in examples
            ]
            self.writer.write_jsonl(records, output)
            self.save_run_config(output)
            return True
        except (DialPathError, OSError) as e:
            self.logger.log_error(f"Failed to compute oracle paths: {e}")
            return False

    def train_paths(self, train_path: str, val_path: Optional[str], model_path: str) -> bool:
        try:
            params = self.config_manager.get_model_params()
            cfg = self.config_manager.get_training_config()
            graph_config = self.config_manager.get_graph_config()
            train_corpus = self.read_corpus(train_path)
            vocab = Vocabulary.from_corpus(train_corpus)
            train = self.build_examples(train_corpus, vocab, graph_config)
            val = self.build_examples(self.read_corpus(val_path), vocab, graph_config) if val_path else None

            model = PathGeneratorModel(params, len(vocab))
            self.logger.log_info(f"Path generator: {model.num_parameters()} parameters")
            result = train_path_generator(train, model, cfg, self.logger, val)

            summary = {"best_epoch": result.best_epoch, "best_loss": result.best_loss}
            if val:
                summary["val_exact_match"] = path_exact_match(val, predict_paths(val, model))
                summary[f"val_exact_match_beam{BEAM_CHECK}"] = path_exact_match(
                    val, predict_paths(val, model, BEAM, BEAM_CHECK))
                self.logger.log_metrics("held-out paths", summary)
            save_checkpoint(model_path, {PATH_MODEL: model}, params, vocab,
                            self._model_meta(graph_config, history=result.history, best_epoch=result.best_epoch))
            self.save_run_config(model_path)
            self.logger.log_success(f"Saved path generator to {model_path}")
            self.writer.write_json(summary)
            return True
        except (DialPathError, OSError) as e:
            self.logger.log_error(f"Failed to train path generator: {e}")
            return False

    def train_joint(self, train_path: str, val_path: Optional[str], grids_path: Optional[str],
                    model_path: str) -> bool:
        try:
            params = self.config_manager.get_model_params()
            cfg = self.config_manager.get_training_config()
            graph_config = self.config_manager.get_graph_config()
            train_corpus = self.read_corpus(train_path)
            vocab = Vocabulary.from_corpus(train_corpus)
            grids = self.read_grids(grids_path, train_path)
            visual_dim = (int(next(iter(grids.values())).shape[1]) if grids
                          else self.config_manager.get_synthetic_config().grid_dim)
            train = self.build_examples(train_corpus, vocab, graph_config)
            val = self.build_examples(self.read_corpus(val_path), vocab, graph_config) if val_path else None

            switches = {"graph_propagation": params.graph_propagation, "path_propagation": params.path_propagation}
            self.logger.log_info(f"Regime {cfg.regime}; propagation switches {switches}")
            path_model = PathGeneratorModel(params, len(vocab))
            model = PropagationModel(params, len(vocab), visual_dim)
            result = train_joint(train, path_model, model, vocab, grids, cfg, self.logger, val)

            summary = {"best_epoch": result.best_epoch, "best_val_loss": result.best_val_loss,
                       "regime": cfg.regime, "switches": switches}
            if val:
                summary["val_exact_match"] = path_exact_match(val, predict_paths(val, path_model))
                answers = predict_answers(val, learned_paths(val, path_model), model, vocab, grids)
                report = evaluate(
                    [Prediction(ex.dialogue_id, ex.turn, ex.gold_path, tuple(ans)) for ex, ans in zip(val, answers)],
                    [Prediction(ex.dialogue_id, ex.turn, ex.gold_path, ex.answer_tokens) for ex in val],
                    score_answers=True, max_workers=self.config_manager.get_workers())
                summary["val_answer_accuracy"] = report.answer_accuracy
                summary["val_bleu_4"] = report.bleu[4]
            save_checkpoint(model_path, {PATH_MODEL: path_model, PROPAGATION_MODEL: model}, params, vocab,
                            self._model_meta(graph_config, visual_dim, regime=cfg.regime, history=result.history,
                                             best_epoch=result.best_epoch))
            self.save_run_config(model_path)
            self.logger.log_success(f"Saved joint model to {model_path}")
            self.writer.write_json(summary)
            return True
        except (DialPathError, OSError) as e:
            self.logger.log_error(f"Failed to train joint model: {e}")
            return False

    def decode_path(self, model_path: str, corpus_path: Optional[str], dialogue_id: Optional[str],
                    turn: Optional[int], beam: int = 1, output: Optional[str] = None) -> bool:
        try:
            checkpoint, path_model, _ = self.load_models(model_path)
            corpus = self.read_corpus(corpus_path)
            dialogue, t = self.select_turn(corpus, dialogue_id, turn)
            builder = self.example_builder(checkpoint.vocab)
            example = builder.build(dialogue, t, self.config_manager.get_seed())
            prediction = generate_path(example, path_model, BEAM if beam > 1 else GREEDY, beam)
            answer_spans = self._answer_spans(builder, dialogue, t)
            self.writer.write_json({
                "dialogue": dialogue.id,
                "turn": t,
                "path": prediction.path.to_list(),
                "score": score_path(prediction.path, answer_spans, example.graph),
                "candidates": len(example.candidates),
                "terminated": prediction.path.terminated,
                "log_prob": prediction.log_prob,
                "step_probabilities": [[float(p) for p in step] for step in prediction.step_probabilities],
            }, output)
            return True
        except (DialPathError, KeyError, OSError) as e:
            self.logger.log_error(f"Failed to decode path: {e}")
            return False

    def _strategy_paths(self, strategy: str, n: int, beam: int, examples: Sequence[TurnExample],
                        path_model: Optional[PathGeneratorModel]) -> List[ReasoningPath]:
        if strategy == LEARNED:
            if path_model is None:
                raise ValidationError("the learned strategy needs --model")
            return learned_paths(examples, path_model, BEAM if beam > 1 else GREEDY, beam)
        rng = np.random.default_rng(self.config_manager.get_seed())
        return [
            baseline_path(strategy, ex.graph, ex.turn, rng, n, ex.gold_path if strategy == ORACLE else None)
            for ex in examples
        ]

    def evaluate(self, corpus_path: str, strategy_name: str, n: Optional[int] = None, beam: int = 1,
                 model_path: Optional[str] = None, grids_path: Optional[str] = None,
                 gold_path: Optional[str] = None, output: Optional[str] = None,
                 predictions_path: Optional[str] = None) -> bool:
        """Score one path strategy (and answers, when the model has a propagation part)."""
        try:
            strategy, window = parse_strategy(strategy_name, n)
            corpus = self.read_corpus(corpus_path)
            path_model = propagation = None
            if model_path:
                checkpoint, path_model, propagation = self.load_models(model_path)
                vocab = checkpoint.vocab
            else:
                vocab = Vocabulary.from_corpus(corpus)
            examples = self.build_examples(corpus, vocab)
            planted = self.read_gold_paths(gold_path, corpus_path)
            paths = self._strategy_paths(strategy, window, beam, examples, path_model)

            answers: List[Tuple[str, ...]] = [()] * len(examples)
            if propagation is not None:
                grids = self.read_grids(grids_path, corpus_path)
                answers = [tuple(tokens) for tokens in predict_answers(examples, paths, propagation, vocab, grids)]
            predictions = [Prediction(ex.dialogue_id, ex.turn, path, answer)
                           for ex, path, answer in zip(examples, paths, answers)]
            gold = [Prediction(ex.dialogue_id, ex.turn, planted.get((ex.dialogue_id, ex.turn), ex.gold_path),
                               ex.answer_tokens) for ex in examples]
            report = evaluate(predictions, gold, score_answers=propagation is not None,
                              max_workers=self.config_manager.get_workers(), logger=self.logger)

            document = report.to_dict()
            document["strategy"] = strategy if strategy != LAST_N else f"last_{window}"
            document["gold"] = "planted" if planted else "oracle"
            if predictions_path:
                self.writer.write_jsonl(
                    ({"dialogue": p.dialogue_id, "turn": p.turn, "path": p.path.to_list(),
                      "terminated": p.path.terminated, "gold": g.path.to_list(), "answer": list(p.answer)}
                     for p, g in zip(predictions, gold)), predictions_path)
            self.writer.write_json(document, output)
            self.save_run_config(output)
            return True
        except (DialPathError, OSError) as e:
            self.logger.log_error(f"Failed to evaluate: {e}")
            return False

    def inspect(self, corpus_path: Optional[str], dialogue_id: Optional[str], turn: Optional[int],
                model_path: Optional[str] = None, output: Optional[str] = None) -> bool:
        """Resolved turns, spans, edges with provenance, scored candidates and the model's path."""
        try:
            corpus = self.read_corpus(corpus_path)
            path_model = None
            if model_path:
                checkpoint, path_model, _ = self.load_models(model_path)
                vocab = checkpoint.vocab
            else:
                vocab = Vocabulary.from_corpus(corpus)
            dialogue, t = self.select_turn(corpus, dialogue_id, turn)
            builder = self.example_builder(vocab)
            example = builder.build(dialogue, t, self.config_manager.get_seed())

            context, _ = context_at(dialogue, t)
            resolved = builder.extractor.resolve_coreferences(list(context.turns) + [dialogue.turn(t)])
            answer_spans = self._answer_spans(builder, dialogue, t)
            graph = example.graph
            document = graph_to_dict(graph, dialogue.id)
            document["resolved_turns"] = {str(turn.turn_index): " ".join(turn.tokens) for turn in resolved}
            document["answer_spans"] = [span.text for span in answer_spans]
            document["candidates"] = [
                {"path": path.to_list(), "score": score_path(path, answer_spans, graph),
                 "tied": path in example.ties}
                for path in example.candidates
            ]
            document["gold_path"] = example.gold_path.to_list()
            if path_model is not None:
                prediction = generate_path(example, path_model)
                document["generated"] = {
                    "path": prediction.path.to_list(),
                    "terminated": prediction.path.terminated,
                    "step_probabilities": [[float(p) for p in step] for step in prediction.step_probabilities],
                }
            self.writer.write_json(document, output)
            return True
        except (DialPathError, KeyError, OSError) as e:
            self.logger.log_error(f"Failed to inspect dialogue: {e}")
            return False

    def tau_sweep(self, corpus_path: Optional[str], gold_path: Optional[str] = None,
                  output: Optional[str] = None) -> bool:
        """Edge density and oracle recovery of final-turn graphs for each threshold in TAU_SWEEP."""
        try:
            corpus = self.read_corpus(corpus_path)
            vocab = Vocabulary.from_corpus(corpus)
            planted = self.read_gold_paths(gold_path, corpus_path)
            planted_by_dialogue = {dialogue: path for (dialogue, _), path in planted.items()}
            base = self.config_manager.get_graph_config()
            seed = self.config_manager.get_seed()
            records = []
            for tau in TAU_SWEEP:
                graph_config = base._replace(tau=tau)
                examples = self.example_builder(vocab, graph_config).build_corpus(corpus, FINAL_TURN, seed)
                densities = []
                for ex in examples:
                    size = len(ex.graph.nodes)
                    pairs = size * (size - 1)
                    densities.append(len(ex.graph.cross_edges()) / pairs if pairs else 0.0)
                record = {"tau": tau, "edge_density": float(np.mean(densities)) if densities else 0.0,
                          "mean_candidates": float(np.mean([len(ex.candidates) for ex in examples]))
                          if examples else 0.0}
                if planted_by_dialogue:
                    record["oracle_recovery"] = oracle_recovery(examples, planted_by_dialogue)
                self.logger.log_metrics(f"tau {tau}", {k: v for k, v in record.items() if k != "tau"})
                records.append(record)
            self.writer.write_jsonl(records, output)
            return True
        except (DialPathError, OSError) as e:
            self.logger.log_error(f"Failed to sweep tau: {e}")
            return False
