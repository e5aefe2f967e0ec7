"""
Adjacency-masked reasoning-path generator.

This module contains the trainable path decoder including:
- Question/context encoding (token embedding + position encoding)
- Three attention blocks: causal self-attention over the path prefix,
  attention over the question, attention over the context
- Output classes: turns 1..max_turns and EOP, masked by graph adjacency,
  visited turns and temporally later turns
- Greedy and beam decoding
- Teacher-forced training with per-step oracle tie resampling
"""

from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.errors import NumericalError, TrainingDivergedError, ValidationError
from core.examples import NO_TURN, TurnExample
from core.oracle_path import ReasoningPath
from core.semantic_graph import turn_adjacency
from neural.functional import cross_entropy_with_label_smoothing, masked_softmax, pos_encode
from neural.layers import Embedding, Linear, Module, TransformerBlock, causal_mask
from neural.optim import Adam, WarmupSchedule
from neural.params import ModelParams, TrainingConfig
from neural.tensor import Tensor, no_grad

GREEDY = "greedy"
BEAM = "beam"


class PathDecodeState(NamedTuple):
    """Generated prefix r_0..r_{m-1}, r_0 being the current turn."""
    prefix: Tuple[int, ...]

    @property
    def current(self) -> int:
        return self.prefix[-1]

    @property
    def visited(self) -> frozenset:
        return frozenset(self.prefix)

    def extend(self, turn: int) -> "PathDecodeState":
        return PathDecodeState(self.prefix + (turn,))


class PathPrediction(NamedTuple):
    path: ReasoningPath
    step_probabilities: Tuple[np.ndarray, ...]
    log_prob: float


class PathGeneratorModel(Module):
    """Turn-position embeddings, three attention blocks and the W_path projection."""

    def __init__(self, params: ModelParams, vocab_size: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(params.seed)
        d = params.d
        self.params = params
        self.vocab_size = vocab_size
        self.token_embedding = Embedding(vocab_size, d, rng)
        # Rows: turns 1..max_turns, EOP, padding.
        self.turn_embedding = Embedding(params.max_turns + 2, d, rng)
        self.self_block = TransformerBlock(d, params.heads, rng, params.dropout, params.ff_multiplier)
        self.question_block = TransformerBlock(d, params.heads, rng, params.dropout, params.ff_multiplier)
        self.context_block = TransformerBlock(d, params.heads, rng, params.dropout, params.ff_multiplier)
        self.w_path = Linear(d, params.num_path_classes, rng, bias=False)

    @property
    def eop_class(self) -> int:
        return self.params.eop_class

    @property
    def pad_class(self) -> int:
        return self.params.max_turns + 1

    def turn_classes(self, turns: Sequence[int]) -> List[int]:
        """Turn t -> class t-1; the no-turn marker -> padding class."""
        classes = []
        for turn in turns:
            if turn == NO_TURN:
                classes.append(self.pad_class)
            elif 1 <= turn <= self.params.max_turns:
                classes.append(turn - 1)
            else:
                raise ValidationError(f"turn {turn} outside 1..{self.params.max_turns}")
        return classes

    def encode_question_context(self, question_ids: Sequence[int], context_ids: Sequence[int],
                                context_turns: Sequence[int]) -> Tuple[Tensor, Tensor]:
        """
        Encode question and context tokens.

        Args:
            question_ids: Question token ids
            context_ids: Context token ids (a single BOS for an empty context)
            context_turns: Source turn of every context token

        Returns:
            (Q of shape L_Q x d, C of shape L_C x d)

        Raises:
            ValidationError: empty question
        """
        if not question_ids:
            raise ValidationError("cannot encode an empty question")
        d = self.params.d
        q = self.token_embedding(question_ids) + pos_encode(len(question_ids), d)
        c = self.token_embedding(context_ids) + pos_encode(len(context_ids), d)
        if self.params.context_turn_embedding:
            c = c + self.turn_embedding(self.turn_classes(context_turns))
        return q, c

    def _attend(self, query: Tensor, key_value: Tensor, q: Tensor, c: Tensor, mask: np.ndarray) -> Tensor:
        h = self.self_block(query, key_value, key_value, mask)
        h = self.question_block(h, q, q)
        return self.context_block(h, c, c)

    def logits(self, prefix: Sequence[int], q: Tensor, c: Tensor) -> Tensor:
        """Unmasked class scores for every prefix position, shape (m, max_turns + 1)."""
        z = self.turn_embedding(self.turn_classes(prefix)) + pos_encode(len(prefix), self.params.d)
        mask = causal_mask(len(prefix))
        h = self._attend(z, z, q, c, mask)
        if self.params.path_self_attention == "previous_outputs":
            h = self._attend(z, h, q, c, mask)
        return self.w_path(h)

    def class_mask(self, prefix: Sequence[int], adjacency: np.ndarray) -> np.ndarray:
        """
        Boolean mask over classes for the step after prefix; True = masked.

        Args:
            prefix: Path so far
            adjacency: Turn-indexed adjacency from turn_adjacency()
        """
        p = self.params
        mask = np.ones(p.num_path_classes, dtype=bool)
        mask[p.eop_class] = False
        current = prefix[-1]
        visited = set(prefix)
        for turn in range(1, p.max_turns + 1):
            if turn >= adjacency.shape[1] or not adjacency[current, turn]:
                continue
            if p.mask_visited and turn in visited:
                continue
            if p.mask_later and turn >= current:
                continue
            mask[turn - 1] = False
        return mask

    def prefix_masks(self, prefix: Sequence[int], adjacency: np.ndarray) -> np.ndarray:
        return np.stack([self.class_mask(prefix[:j + 1], adjacency) for j in range(len(prefix))])


def _adjacency(example: TurnExample, model: PathGeneratorModel) -> np.ndarray:
    return turn_adjacency(example.graph, model.params.max_turns)


def decode_step(state: PathDecodeState, q: Tensor, c: Tensor, adjacency: np.ndarray,
                model: PathGeneratorModel) -> np.ndarray:
    """
    Probability vector P_m over turn classes and EOP for the step after state.

    Returns:
        Array of length max_turns + 1 summing to 1; masked entries ~0
    """
    with no_grad():
        scores = model.logits(state.prefix, q, c)[len(state.prefix) - 1]
        return masked_softmax(scores, model.class_mask(state.prefix, adjacency)).data


def _log(p: float) -> float:
    return float(np.log(max(p, 1e-300)))


def _valid_step(state: PathDecodeState, turn: int) -> bool:
    return turn < state.current and turn not in state.visited


def _greedy(example: TurnExample, model: PathGeneratorModel, q: Tensor, c: Tensor,
            adjacency: np.ndarray) -> PathPrediction:
    state = PathDecodeState((example.turn,))
    steps: List[np.ndarray] = []
    log_prob = 0.0
    for _ in range(model.params.max_turns + 1):
        probs = decode_step(state, q, c, adjacency, model)
        choice = int(np.argmax(probs))
        steps.append(probs)
        log_prob += _log(probs[choice])
        if choice == model.eop_class:
            return PathPrediction(ReasoningPath(state.prefix, True), tuple(steps), log_prob)
        turn = choice + 1
        if not _valid_step(state, turn):
            # Only reachable with the visited/later masks disabled.
            return PathPrediction(ReasoningPath(state.prefix, False), tuple(steps), log_prob)
        state = state.extend(turn)
    return PathPrediction(ReasoningPath(state.prefix, False), tuple(steps), log_prob)


def _beam(example: TurnExample, model: PathGeneratorModel, q: Tensor, c: Tensor,
          adjacency: np.ndarray, beam_size: int) -> PathPrediction:
    # (score, state, finished, terminated, step probabilities)
    beams = [(0.0, PathDecodeState((example.turn,)), False, False, ())]
    for _ in range(model.params.max_turns + 1):
        if all(beam[2] for beam in beams):
            break
        candidates = []
        for score, state, finished, terminated, steps in beams:
            if finished:
                candidates.append((score, state, finished, terminated, steps))
                continue
            probs = decode_step(state, q, c, adjacency, model)
            mask = model.class_mask(state.prefix, adjacency)
            for choice in np.flatnonzero(~mask):
                choice = int(choice)
                new_score = score + _log(probs[choice])
                new_steps = steps + (probs,)
                if choice == model.eop_class:
                    candidates.append((new_score, state, True, True, new_steps))
                elif _valid_step(state, choice + 1):
                    candidates.append((new_score, state.extend(choice + 1), False, False, new_steps))
                else:
                    candidates.append((new_score, state, True, False, new_steps))
        beams = sorted(candidates, key=lambda beam: -beam[0])[:beam_size]
    score, state, _, terminated, steps = sorted(beams, key=lambda beam: -beam[0])[0]
    return PathPrediction(ReasoningPath(state.prefix, terminated), steps, score)


def generate_path(example: TurnExample, model: PathGeneratorModel, mode: str = GREEDY,
                  beam_size: int = 1) -> PathPrediction:
    """
    Decode a reasoning path for one example.

    Args:
        example: Question, context and graph of a (dialogue, turn)
        model: Path generator
        mode: 'greedy' or 'beam'
        beam_size: Beam width for beam mode

    Returns:
        PathPrediction with the path and per-step probability vectors
    """
    if mode not in (GREEDY, BEAM):
        raise ValidationError(f"unknown decoding mode '{mode}'")
    if mode == BEAM and beam_size < 1:
        raise ValidationError(f"beam size must be >= 1, got {beam_size}")
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            q, c = model.encode_question_context(example.question_ids, example.context_ids,
                                                 example.context_turns)
        adjacency = _adjacency(example, model)
        if mode == GREEDY:
            return _greedy(example, model, q, c, adjacency)
        return _beam(example, model, q, c, adjacency, beam_size)
    finally:
        model.train(was_training)


def path_targets(path: ReasoningPath, model: PathGeneratorModel) -> List[int]:
    """Classes of r_1..r_n followed by EOP."""
    return [turn - 1 for turn in path.turns[1:]] + [model.eop_class]


def path_loss(example: TurnExample, model: PathGeneratorModel,
              path: Optional[ReasoningPath] = None) -> Tuple[Tensor, int, int]:
    """
    Teacher-forced cross-entropy of a path (no label smoothing).

    Returns:
        (mean loss over steps, correctly predicted steps, number of steps)
    """
    path = path or example.gold_path
    q, c = model.encode_question_context(example.question_ids, example.context_ids, example.context_turns)
    logits = model.logits(path.turns, q, c)
    masks = model.prefix_masks(path.turns, _adjacency(example, model))
    targets = path_targets(path, model)
    loss = cross_entropy_with_label_smoothing(logits, targets, 0.0, mask=masks)
    predicted = np.argmax(np.where(masks, -np.inf, logits.data), axis=-1)
    return loss, int(np.sum(predicted == np.asarray(targets))), len(targets)


class PathTrainingResult(NamedTuple):
    model: PathGeneratorModel
    history: List[Dict[str, float]]
    best_epoch: int
    best_loss: float


def predict_paths(examples: Sequence[TurnExample], model: PathGeneratorModel, mode: str = GREEDY,
                  beam_size: int = 1) -> List[PathPrediction]:
    return [generate_path(example, model, mode, beam_size) for example in examples]


def path_exact_match(examples: Sequence[TurnExample], predictions: Sequence[PathPrediction]) -> float:
    if not examples:
        return 0.0
    hits = sum(pred.path.turns == ex.gold_path.turns and pred.path.terminated
               for ex, pred in zip(examples, predictions))
    return hits / len(examples)


def evaluate_path_loss(examples: Sequence[TurnExample], model: PathGeneratorModel) -> Tuple[float, float]:
    """Mean teacher-forced loss and step accuracy on gold paths, dropout off."""
    if not examples:
        return 0.0, 0.0
    was_training = model.training
    model.eval()
    total, correct, steps = 0.0, 0, 0
    try:
        with no_grad():
            for example in examples:
                loss, right, count = path_loss(example, model)
                total += loss.item()
                correct += right
                steps += count
    finally:
        model.train(was_training)
    return total / len(examples), correct / max(steps, 1)


def train_path_generator(examples: Sequence[TurnExample], model: PathGeneratorModel, cfg: TrainingConfig,
                         logger=None, val_examples: Optional[Sequence[TurnExample]] = None) -> PathTrainingResult:
    """
    Minimize per-step path cross-entropy with Adam and warm-up.

    Oracle ties are resampled every time an example is visited. The
    parameters with the lowest validation loss (training loss without a
    validation split) are restored at the end.

    Raises:
        TrainingDivergedError: NaN/Inf loss or gradient
    """
    cfg.validate()
    if not examples:
        raise ValidationError("no training examples")
    rng = np.random.default_rng(cfg.seed)
    schedule = WarmupSchedule(cfg.peak_lr, cfg.warmup_steps(len(examples)), cfg.lr_decay)
    optimizer = Adam(model.parameters(), schedule)
    history: List[Dict[str, float]] = []
    best_state, best_epoch, best_loss = model.state_dict(), 0, float("inf")

    if logger:
        logger.log_section(f"Training path generator on {len(examples)} examples")
        logger.create_progress_bar(cfg.epochs, "Path epochs", unit="epoch")
    try:
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            order = rng.permutation(len(examples))
            epoch_loss, correct, steps, seen = 0.0, 0, 0, 0
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                optimizer.zero_grad()
                try:
                    for index in batch:
                        example = examples[int(index)]
                        path = example.sample_gold(rng) if cfg.resample_ties else example.gold_path
                        loss, right, count = path_loss(example, model, path)
                        loss.backward()
                        epoch_loss += loss.item()
                        seen += 1
                        correct += right
                        steps += count
                    lr = optimizer.step(scale=1.0 / len(batch))
                except NumericalError as e:
                    raise TrainingDivergedError(
                        f"path training diverged: {e}",
                        {"epoch": epoch, "step": optimizer.step_count, "lr": optimizer.current_lr(),
                         "last_mean_loss": epoch_loss / max(1, seen)})
            metrics = {"loss": epoch_loss / len(examples), "step_accuracy": correct / max(steps, 1), "lr": lr}
            if val_examples:
                val_loss, val_accuracy = evaluate_path_loss(val_examples, model)
                metrics["val_loss"] = val_loss
                metrics["val_step_accuracy"] = val_accuracy
                metrics["val_exact_match"] = path_exact_match(val_examples, predict_paths(val_examples, model))
            history.append(metrics)
            selection = metrics.get("val_loss", metrics["loss"])
            if selection < best_loss:
                best_state, best_epoch, best_loss = model.state_dict(), epoch, selection
            if logger:
                logger.log_metrics(f"path epoch {epoch}", metrics)
                logger.update_progress()
    finally:
        if logger:
            logger.close_progress_bar()
    model.load_state_dict(best_state)
    model.eval()
    if logger:
        logger.log_success(f"Path generator trained; best epoch {best_epoch} (loss {best_loss:.4f})")
    return PathTrainingResult(model, history, best_epoch, best_loss)
