"""
Graph and path feature propagation feeding the answer decoder.

This module contains:
- Turn representations: mean-pooled token embeddings, projected to width d
- Turn-conditioned visual attention over a feature grid
- GCN message passing over the semantic graph
- Sequential path traversal encoding
- A small transformer answer decoder attending to the question, the
  propagated turn features and the path stream
- Joint (path + answer) and pipeline training

Turns are rows throughout: V, M and M~ have shape (|nodes|, d), rows in
ascending turn order.
"""

from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.dialogue import Vocabulary
from core.errors import NumericalError, TrainingDivergedError, ValidationError
from core.examples import TurnExample
from core.oracle_path import ReasoningPath
from core.path_generator import (GREEDY, PathGeneratorModel, evaluate_path_loss, generate_path, path_loss,
                                 train_path_generator)
from core.semantic_graph import SemanticGraph, adjacency
from neural.functional import cross_entropy_with_label_smoothing, masked_softmax, pos_encode
from neural.layers import MLP, Embedding, Linear, Module, TransformerBlock, causal_mask
from neural.optim import Adam, WarmupSchedule
from neural.params import ModelParams, TrainingConfig
from neural.tensor import Tensor, concat, no_grad

DEFAULT_MAX_ANSWER_LENGTH = 20


class VisualFeatureGrid(NamedTuple):
    """N visual tokens of width d_v for one video."""
    tokens: np.ndarray
    source_id: str = ""

    def validate(self):
        if self.tokens.ndim != 2 or self.tokens.shape[0] < 1:
            raise ValidationError(f"visual grid '{self.source_id}' must be N x d_v with N >= 1")
        if not np.all(np.isfinite(self.tokens)):
            raise ValidationError(f"visual grid '{self.source_id}' holds non-finite values")
        return self


class GCNLayer(Module):
    """e_k = mean over neighbors j of f([m_k; m_j]); e = mean_k e_k; m~_k = g([m_k; e_k; e])."""

    def __init__(self, d: int, rng: np.random.Generator):
        super().__init__()
        self.f = MLP(2 * d, d, d, rng)
        self.g = MLP(3 * d, d, d, rng)

    def forward(self, m: Tensor, adj: np.ndarray) -> Tensor:
        n = m.shape[0]
        rows, cols = np.nonzero(adj)
        messages = self.f(concat([m[rows], m[cols]], axis=1))
        degree = adj.sum(axis=1)
        if np.any(degree == 0):
            raise ValidationError("every node needs at least its self-loop")
        weights = np.zeros((n, len(rows)))
        weights[rows, np.arange(len(rows))] = 1.0 / degree[rows]
        e_local = Tensor(weights) @ messages
        e_global = Tensor(np.ones((n, 1))) @ e_local.mean(axis=0, keepdims=True)
        return self.g(concat([m, e_local, e_global], axis=1))


class DecoderLayer(Module):
    """Self, question, turn-feature and path attention blocks."""

    def __init__(self, params: ModelParams, rng: np.random.Generator):
        super().__init__()
        args = (params.d, params.heads, rng, params.dropout, params.ff_multiplier)
        self.self_block = TransformerBlock(*args)
        self.question_block = TransformerBlock(*args)
        self.feature_block = TransformerBlock(*args)
        self.path_block = TransformerBlock(*args)

    def forward(self, x: Tensor, q: Tensor, features: Tensor, path_stream: Tensor, mask: np.ndarray) -> Tensor:
        x = self.self_block(x, x, x, mask)
        x = self.question_block(x, q, q)
        x = self.feature_block(x, features, features)
        return self.path_block(x, path_stream, path_stream)


class PropagationModel(Module):
    """Visual attention, GCN layers, path traversal encoder and answer decoder."""

    def __init__(self, params: ModelParams, vocab_size: int, visual_dim: int,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(params.seed + 1)
        d = params.d
        self.params = params
        self.vocab_size = vocab_size
        self.visual_dim = visual_dim
        self.token_embedding = Embedding(vocab_size, d, rng)
        self.turn_projection = Linear(d, d, rng)
        self.visual_projection = Linear(visual_dim, d, rng)
        self.visual_block = TransformerBlock(d, params.heads, rng, params.dropout, params.ff_multiplier)
        self.gcn_layers = [GCNLayer(d, rng) for _ in range(params.gcn_layers)]
        self.path_block = TransformerBlock(d, params.heads, rng, params.dropout, params.ff_multiplier)
        self.decoder_layers = [DecoderLayer(params, rng) for _ in range(params.decoder_layers)]
        self.w_vocab = Linear(d, vocab_size, rng)


def turn_representations(graph: SemanticGraph, node_token_ids: Mapping[int, Sequence[int]],
                         model: PropagationModel) -> Tensor:
    """
    V: one row per graph node, the projected mean of its token embeddings.

    Raises:
        ValidationError: a node without tokens
    """
    rows = []
    for node in graph.nodes:
        ids = node_token_ids.get(node, ())
        if not ids:
            raise ValidationError(f"turn {node} has no tokens")
        rows.append(model.token_embedding(ids).mean(axis=0, keepdims=True))
    return model.turn_projection(concat(rows, axis=0))


def visual_attention(v: Tensor, grid: VisualFeatureGrid, model: PropagationModel) -> Tensor:
    """
    M = Transformer(V, I, I): each turn row queries the projected visual tokens.

    Raises:
        ValidationError: empty or malformed grid
    """
    grid.validate()
    if grid.tokens.shape[1] != model.visual_dim:
        raise ValidationError(f"visual width {grid.tokens.shape[1]} != model visual width {model.visual_dim}")
    i = model.visual_projection(Tensor(grid.tokens))
    return model.visual_block(v, i, i)


def gcn_update(m: Tensor, graph: SemanticGraph, model: PropagationModel) -> Tensor:
    """M~ after every GCN layer; M itself when graph propagation is switched off."""
    if not model.params.graph_propagation:
        return m
    adj = adjacency(graph)
    for layer in model.gcn_layers:
        m = layer(m, adj)
    return m


def gather_path_rows(m_tilde: Tensor, path: ReasoningPath, graph: SemanticGraph) -> Tensor:
    """G: rows of M~ in path order."""
    return m_tilde[np.array([graph.index_of(turn) for turn in path.turns])]


def traverse_path(m_tilde: Tensor, path: ReasoningPath, graph: SemanticGraph, model: PropagationModel,
                  zero_stream: bool = False) -> Tensor:
    """
    G~ = Transformer(G, G, G) with G the path-ordered rows of M~ plus position encoding.

    A zero stream of the same shape is returned when path propagation is off
    or zero_stream is set.

    Raises:
        GraphError: a path turn is not a graph node
    """
    g = gather_path_rows(m_tilde, path, graph)
    if zero_stream or not model.params.path_propagation:
        return Tensor(np.zeros(g.shape))
    g = g + pos_encode(len(path.turns), model.params.d)
    return model.path_block(g, g, g)


def _decoder_logits(model: PropagationModel, question_ids: Sequence[int], inputs: Sequence[int],
                    features: Tensor, path_stream: Tensor) -> Tensor:
    d = model.params.d
    q = model.token_embedding(question_ids) + pos_encode(len(question_ids), d)
    x = model.token_embedding(inputs) + pos_encode(len(inputs), d)
    mask = causal_mask(len(inputs))
    for layer in model.decoder_layers:
        x = layer(x, q, features, path_stream, mask)
    return model.w_vocab(x)


def decode_answer(question_ids: Sequence[int], m_tilde: Tensor, g_tilde: Tensor, model: PropagationModel,
                  vocab: Vocabulary, answer_ids: Optional[Sequence[int]] = None, epsilon: float = 0.0,
                  max_length: int = DEFAULT_MAX_ANSWER_LENGTH):
    """
    Train or generate with the answer decoder.

    With answer_ids the decoder is teacher-forced on [BOS] + answer and the
    smoothed cross-entropy against answer + [EOS] is returned as
    (loss, correct tokens, target tokens). Without answer_ids, greedy
    generation returns the token ids before EOS.
    """
    if not question_ids:
        raise ValidationError("cannot decode an answer for an empty question")
    if answer_ids is not None:
        inputs = [vocab.bos_id] + list(answer_ids)
        targets = list(answer_ids) + [vocab.eos_id]
        logits = _decoder_logits(model, question_ids, inputs, m_tilde, g_tilde)
        loss = cross_entropy_with_label_smoothing(logits, targets, epsilon)
        correct = int(np.sum(np.argmax(logits.data, axis=-1) == np.asarray(targets)))
        return loss, correct, len(targets)

    blocked = np.zeros(model.vocab_size, dtype=bool)
    blocked[[vocab.pad_id, vocab.bos_id]] = True
    generated: List[int] = []
    with no_grad():
        for _ in range(max_length):
            logits = _decoder_logits(model, question_ids, [vocab.bos_id] + generated, m_tilde, g_tilde)
            probs = masked_softmax(logits[len(generated)], blocked).data
            token = int(np.argmax(probs))
            if token == vocab.eos_id:
                break
            generated.append(token)
    return generated


def grid_for(example: TurnExample, grids: Mapping[str, np.ndarray], visual_dim: int) -> VisualFeatureGrid:
    """The example's visual grid; a single zero token when the dialogue has no video."""
    if example.video_ref is None:
        return VisualFeatureGrid(np.zeros((1, visual_dim)), "")
    if example.video_ref not in grids:
        raise ValidationError(f"no visual grid for video_ref '{example.video_ref}'")
    return VisualFeatureGrid(np.asarray(grids[example.video_ref], dtype=np.float64), example.video_ref)


def propagate(example: TurnExample, path: ReasoningPath, model: PropagationModel,
              grids: Mapping[str, np.ndarray], zero_path_stream: bool = False) -> Tuple[Tensor, Tensor]:
    """(M~, G~) for an example along a given path."""
    v = turn_representations(example.graph, example.node_token_ids, model)
    m = visual_attention(v, grid_for(example, grids, model.visual_dim), model)
    m_tilde = gcn_update(m, example.graph, model)
    return m_tilde, traverse_path(m_tilde, path, example.graph, model, zero_path_stream)


def answer_loss(example: TurnExample, path: ReasoningPath, model: PropagationModel, vocab: Vocabulary,
                grids: Mapping[str, np.ndarray], epsilon: float = 0.0,
                zero_path_stream: bool = False) -> Tuple[Tensor, int, int]:
    m_tilde, g_tilde = propagate(example, path, model, grids, zero_path_stream)
    return decode_answer(example.question_ids, m_tilde, g_tilde, model, vocab, example.answer_ids, epsilon)


def generate_answer(example: TurnExample, path: ReasoningPath, model: PropagationModel, vocab: Vocabulary,
                    grids: Mapping[str, np.ndarray], zero_path_stream: bool = False,
                    max_length: int = DEFAULT_MAX_ANSWER_LENGTH) -> List[int]:
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            m_tilde, g_tilde = propagate(example, path, model, grids, zero_path_stream)
            return decode_answer(example.question_ids, m_tilde, g_tilde, model, vocab, max_length=max_length)
    finally:
        model.train(was_training)


class JointTrainingResult(NamedTuple):
    path_model: PathGeneratorModel
    propagation_model: PropagationModel
    history: List[Dict[str, float]]
    best_epoch: int
    best_val_loss: float


def evaluate_joint_loss(examples: Sequence[TurnExample], path_model: PathGeneratorModel,
                        model: PropagationModel, vocab: Vocabulary, grids: Mapping[str, np.ndarray],
                        epsilon: float) -> Tuple[float, float]:
    """(mean path + answer loss, answer token accuracy) with gold paths and dropout off."""
    if not examples:
        return 0.0, 0.0
    path_mean, _ = evaluate_path_loss(examples, path_model)
    was_training = model.training
    model.eval()
    total, correct, count = 0.0, 0, 0
    try:
        with no_grad():
            for example in examples:
                loss, right, n = answer_loss(example, example.gold_path, model, vocab, grids, epsilon)
                total += loss.item()
                correct += right
                count += n
    finally:
        model.train(was_training)
    return path_mean + total / len(examples), correct / max(count, 1)


def train_joint(examples: Sequence[TurnExample], path_model: PathGeneratorModel, model: PropagationModel,
                vocab: Vocabulary, grids: Mapping[str, np.ndarray], cfg: TrainingConfig, logger=None,
                val_examples: Optional[Sequence[TurnExample]] = None,
                zero_path_stream: bool = False) -> JointTrainingResult:
    """
    Optimize the path loss and the label-smoothed answer loss.

    regime 'joint' sums both losses over the parameters of both models;
    regime 'pipeline' trains the path generator first, freezes it, then
    trains the propagation model on the answer loss alone. The ground-truth
    path feeds traverse_path during training. Parameters with the lowest
    average validation loss are restored at the end.

    Raises:
        TrainingDivergedError: NaN/Inf loss or gradient
    """
    cfg.validate()
    if not examples:
        raise ValidationError("no training examples")
    joint = cfg.regime == "joint"
    if not joint:
        train_path_generator(examples, path_model, cfg, logger, val_examples)
        path_model.eval()

    rng = np.random.default_rng(cfg.seed + 1)
    parameters = model.parameters() + (path_model.parameters() if joint else [])
    optimizer = Adam(parameters, WarmupSchedule(cfg.peak_lr, cfg.warmup_steps(len(examples)), cfg.lr_decay))
    history: List[Dict[str, float]] = []
    best = (path_model.state_dict(), model.state_dict())
    best_epoch, best_loss = 0, float("inf")

    if logger:
        logger.log_section(f"Training propagation model ({cfg.regime}) on {len(examples)} examples")
        logger.create_progress_bar(cfg.epochs, "Joint epochs", unit="epoch")
    try:
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            path_model.train(joint)
            order = rng.permutation(len(examples))
            sums = {"path_loss": 0.0, "answer_loss": 0.0}
            correct, count, lr = 0, 0, 0.0
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                optimizer.zero_grad()
                try:
                    for index in batch:
                        example = examples[int(index)]
                        gold = example.sample_gold(rng) if cfg.resample_ties else example.gold_path
                        a_loss, right, n = answer_loss(example, gold, model, vocab, grids,
                                                       cfg.label_smoothing, zero_path_stream)
                        loss = a_loss
                        if joint:
                            p_loss, _, _ = path_loss(example, path_model, gold)
                            loss = p_loss + a_loss
                            sums["path_loss"] += p_loss.item()
                        loss.backward()
                        sums["answer_loss"] += a_loss.item()
                        correct += right
                        count += n
                    lr = optimizer.step(scale=1.0 / len(batch))
                except NumericalError as e:
                    raise TrainingDivergedError(
                        f"joint training diverged: {e}",
                        {"epoch": epoch, "step": optimizer.step_count, "lr": optimizer.current_lr(),
                         "regime": cfg.regime})
            metrics = {key: value / len(examples) for key, value in sums.items()}
            metrics["answer_accuracy"] = correct / max(count, 1)
            metrics["lr"] = lr
            if val_examples:
                metrics["val_loss"], metrics["val_answer_accuracy"] = evaluate_joint_loss(
                    val_examples, path_model, model, vocab, grids, cfg.label_smoothing)
            history.append(metrics)
            selection = metrics.get("val_loss", metrics["path_loss"] + metrics["answer_loss"])
            if selection < best_loss:
                best = (path_model.state_dict(), model.state_dict())
                best_epoch, best_loss = epoch, selection
            if logger:
                logger.log_metrics(f"joint epoch {epoch}", metrics)
                logger.update_progress()
    finally:
        if logger:
            logger.close_progress_bar()
    path_model.load_state_dict(best[0])
    model.load_state_dict(best[1])
    path_model.eval()
    model.eval()
    if logger:
        logger.log_success(f"Joint training done; best epoch {best_epoch} (loss {best_loss:.4f})")
    return JointTrainingResult(path_model, model, history, best_epoch, best_loss)


def predict_answers(examples: Sequence[TurnExample], paths: Sequence[ReasoningPath], model: PropagationModel,
                    vocab: Vocabulary, grids: Mapping[str, np.ndarray],
                    zero_path_stream: bool = False) -> List[List[str]]:
    """Generated answer tokens for each (example, path) pair."""
    return [
        vocab.decode(generate_answer(example, path, model, vocab, grids, zero_path_stream))
        for example, path in zip(examples, paths)
    ]


def learned_paths(examples: Sequence[TurnExample], path_model: PathGeneratorModel, mode: str = GREEDY,
                  beam_size: int = 1) -> List[ReasoningPath]:
    return [generate_path(example, path_model, mode, beam_size).path for example in examples]
