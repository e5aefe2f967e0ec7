"""
Path and answer metrics.

This module provides:
- Path exact match (turns and termination must both agree)
- Micro-averaged precision/recall/F1 over path edges
- Positional answer token accuracy
- Corpus BLEU-1..4 with brevity penalty and epsilon smoothing
- A breakdown of every metric by gold path length
"""

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from core.errors import EvaluationError
from core.oracle_path import ReasoningPath

MAX_BLEU_ORDER = 4
BLEU_EPSILON = 0.1
DEFAULT_WORKERS = 4


class Prediction(NamedTuple):
    """A path (and optionally an answer) for one (dialogue, turn)."""
    dialogue_id: str
    turn: int
    path: ReasoningPath
    answer: Tuple[str, ...] = ()

    @property
    def key(self) -> Tuple[str, int]:
        return self.dialogue_id, self.turn


class ItemStats(NamedTuple):
    exact: bool
    true_edges: int
    predicted_edges: int
    gold_edges: int
    hops: int
    answer_matches: int
    answer_positions: int


class EvalReport(NamedTuple):
    """Aggregate metrics; answer metrics are None when answers were not scored."""
    count: int
    exact_match: float
    edge_precision: float
    edge_recall: float
    edge_f1: float
    answer_accuracy: Optional[float] = None
    bleu: Optional[Dict[int, float]] = None
    per_hop: Optional[Dict[int, dict]] = None

    def to_dict(self) -> dict:
        document = {
            "count": self.count,
            "exact_match": self.exact_match,
            "edge_precision": self.edge_precision,
            "edge_recall": self.edge_recall,
            "edge_f1": self.edge_f1,
        }
        if self.answer_accuracy is not None:
            document["answer_accuracy"] = self.answer_accuracy
        if self.bleu is not None:
            document["bleu"] = {f"bleu_{n}": value for n, value in sorted(self.bleu.items())}
        if self.per_hop is not None:
            document["per_hop"] = {str(hops): values for hops, values in sorted(self.per_hop.items())}
        return document


def _ngrams(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1))


def corpus_bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                max_order: int = MAX_BLEU_ORDER, epsilon: float = BLEU_EPSILON) -> Dict[int, float]:
    """
    Corpus-level BLEU-1..max_order against a single reference per hypothesis.

    Clipped n-gram matches and candidate n-gram counts are summed over the
    corpus. An order with zero matches uses epsilon / candidate count as its
    precision. The brevity penalty is exp(1 - r / c) when c <= r, with c and
    r the total hypothesis and reference lengths.

    Args:
        hypotheses: Generated token sequences
        references: Reference token sequences, aligned with hypotheses
        max_order: Highest n-gram order
        epsilon: Smoothing count for orders without matches

    Returns:
        {n: BLEU-n}; all zeros for an empty or zero-length hypothesis set
    """
    if len(hypotheses) != len(references):
        raise EvaluationError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    matches = [0] * max_order
    possible = [0] * max_order
    hyp_length = sum(len(hypothesis) for hypothesis in hypotheses)
    ref_length = sum(len(reference) for reference in references)
    for hypothesis, reference in zip(hypotheses, references):
        for order in range(1, max_order + 1):
            candidate = _ngrams(hypothesis, order)
            overlap = candidate & _ngrams(reference, order)
            matches[order - 1] += sum(overlap.values())
            possible[order - 1] += sum(candidate.values())

    if hyp_length == 0:
        return {n: 0.0 for n in range(1, max_order + 1)}
    penalty = 1.0 if hyp_length > ref_length else math.exp(1.0 - ref_length / hyp_length)

    log_precisions = []
    for order in range(max_order):
        if matches[order] > 0:
            log_precisions.append(math.log(matches[order] / possible[order]))
        else:
            log_precisions.append(math.log(epsilon / max(possible[order], 1)))
    return {
        n: penalty * math.exp(math.fsum(log_precisions[:n]) / n)
        for n in range(1, max_order + 1)
    }


def _item_stats(prediction: Prediction, gold: Prediction) -> ItemStats:
    predicted_edges = set(prediction.path.edges)
    gold_edges = set(gold.path.edges)
    exact = prediction.path.turns == gold.path.turns and prediction.path.terminated == gold.path.terminated
    positions = max(len(prediction.answer), len(gold.answer))
    answer_matches = sum(1 for a, b in zip(prediction.answer, gold.answer) if a == b)
    return ItemStats(exact, len(predicted_edges & gold_edges), len(predicted_edges), len(gold_edges),
                     len(gold.path.turns), answer_matches, positions)


def _edge_scores(stats: Sequence[ItemStats]) -> Tuple[float, float, float]:
    true = sum(item.true_edges for item in stats)
    predicted = sum(item.predicted_edges for item in stats)
    gold = sum(item.gold_edges for item in stats)
    if predicted == 0 and gold == 0:
        return 1.0, 1.0, 1.0
    precision = true / predicted if predicted else 0.0
    recall = true / gold if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _answer_accuracy(stats: Sequence[ItemStats]) -> float:
    positions = sum(item.answer_positions for item in stats)
    if positions == 0:
        return 1.0
    return sum(item.answer_matches for item in stats) / positions


def check_alignment(predictions: Sequence[Prediction], gold: Sequence[Prediction]):
    """Raise EvaluationError unless both sequences cover the same (dialogue, turn) keys in order."""
    if len(predictions) != len(gold):
        raise EvaluationError(f"{len(predictions)} predictions vs {len(gold)} gold items")
    for position, (prediction, reference) in enumerate(zip(predictions, gold)):
        if prediction.key != reference.key:
            raise EvaluationError(
                f"item {position}: prediction for {prediction.key} aligned with gold {reference.key}")


def evaluate(predictions: Sequence[Prediction], gold: Sequence[Prediction], score_answers: bool = False,
             max_workers: int = DEFAULT_WORKERS, logger=None) -> EvalReport:
    """
    Score predicted paths (and answers) against gold.

    Args:
        predictions: Predicted paths, answers in Prediction.answer
        gold: Gold paths and reference answers, aligned with predictions
        score_answers: Also compute answer accuracy and BLEU
        max_workers: Worker threads for per-item statistics
        logger: Optional Logger

    Returns:
        EvalReport

    Raises:
        EvaluationError: Misaligned predictions and gold
    """
    check_alignment(predictions, gold)
    if not predictions:
        raise EvaluationError("nothing to evaluate")
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        stats: List[ItemStats] = list(pool.map(_item_stats, predictions, gold))

    by_hop: Dict[int, List[int]] = {}
    for index, item in enumerate(stats):
        by_hop.setdefault(item.hops, []).append(index)

    per_hop = {}
    for hops, indices in by_hop.items():
        subset = [stats[i] for i in indices]
        _, _, f1 = _edge_scores(subset)
        entry = {"count": len(subset), "exact_match": sum(item.exact for item in subset) / len(subset),
                 "edge_f1": f1}
        if score_answers:
            entry["answer_accuracy"] = _answer_accuracy(subset)
            entry["bleu_4"] = corpus_bleu([predictions[i].answer for i in indices],
                                          [gold[i].answer for i in indices])[MAX_BLEU_ORDER]
        per_hop[hops] = entry

    precision, recall, f1 = _edge_scores(stats)
    report = EvalReport(
        count=len(stats),
        exact_match=sum(item.exact for item in stats) / len(stats),
        edge_precision=precision,
        edge_recall=recall,
        edge_f1=f1,
        answer_accuracy=_answer_accuracy(stats) if score_answers else None,
        bleu=corpus_bleu([p.answer for p in predictions], [g.answer for g in gold]) if score_answers else None,
        per_hop=per_hop,
    )
    if logger:
        logger.log_metrics("evaluation", {key: value for key, value in report.to_dict().items()
                                          if isinstance(value, float)})
    return report
