"""
Synthetic dialogue corpus with planted reasoning chains.

Each dialogue ends in a question whose answer depends on a known chain of
earlier turns:
- 1 hop: the final turn alone answers itself
- 2 hops: one earlier turn describes the entity asked about
- 3 hops: the final question names entity A, an earlier turn links A to
  entity B, and a still earlier turn describes B

All other turns are distractors (about nouns no chain turn mentions) or
span-free filler. The gold path is the chain in decreasing turn order.
Every dialogue gets a visual feature grid whose planted rows encode the
chain entities together with their attributes.
"""

import os
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.dialogue import DEFAULT_MAX_TURNS, Corpus, Dialogue, DialogueTurn, save_corpus, tokenize
from core.embeddings import hashed_vector
from core.errors import ConfigError
from core.oracle_path import ReasoningPath
from utils.container import write_container
from utils.output_writer import OutputWriter

ENTITY_NOUNS = (
    "apple", "bottle", "chair", "table", "lamp", "book", "phone", "cup", "plate", "box",
    "door", "window", "shelf", "towel", "pillow", "blanket", "clock", "mirror", "basket", "candle",
    "laptop", "jacket", "shoe", "hat", "umbrella", "guitar", "ball", "broom", "bucket", "kettle",
    "spoon", "fork", "knife", "bowl", "vase", "rug", "curtain", "desk", "sink", "fridge",
)
DISTRACTOR_NOUNS = (
    "dog", "cat", "bird", "car", "tree", "flower", "poster", "radio", "camera", "bicycle",
    "toy", "bench", "fence", "truck", "boat", "horse", "fish", "plant", "screen", "wall",
)
COLORS = (
    "red", "blue", "green", "yellow", "black", "white", "brown", "gray",
    "orange", "purple", "pink", "beige", "silver", "golden",
)
GERUNDS = (
    "running", "jumping", "sleeping", "barking", "eating", "singing", "dancing", "walking",
    "sitting", "reading", "cooking", "washing", "playing", "waving", "laughing", "smiling",
)

DISTRACTOR = ("what does the {noun} do ?", "the {noun} is {gerund}")
FILLER = ("is there anything else ?", "no , nothing")
ONE_HOP = ("what is the {e0} doing ?", "the {e0} is {v0}")
DESCRIBE = ("how does the {entity} look ?", "the {entity} is {color}")
TWO_HOP_FINAL = ("tell me about the {e1} ?", "the {e1} is {c1}")
LINK = ("where is the {e1} ?", "the {e1} is near the {e2}")
THREE_HOP_FINAL = ("what is near the {e1} ?", "the {e2} is {c2}")
TEMPLATES = (DISTRACTOR, FILLER, ONE_HOP, DESCRIBE, TWO_HOP_FINAL, LINK, THREE_HOP_FINAL)

# Template slots tokenize as "{", name, "}".
PLACEHOLDER_TOKENS = frozenset((
    "{", "}", "noun", "gerund", "entity", "color", "e0", "v0", "e1", "c1", "e2", "c2",
))
HOP_COUNTS = (1, 2, 3)
GRID_NOISE = 0.1


class SyntheticCorpusConfig(NamedTuple):
    """Size and mix of a synthetic corpus; val_dialogues defaults to n_dialogues // 5."""
    n_dialogues: int = 500
    val_dialogues: Optional[int] = None
    min_turns: int = 5
    max_turns: int = 8
    entity_pool: int = 40
    hop_probs: Tuple[float, float, float] = (0.2, 0.4, 0.4)
    distractor_rate: float = 0.7
    vocab_size: int = 400
    grid_rows: int = 12
    grid_dim: int = 16
    seed: int = 7

    @property
    def n_val(self) -> int:
        return self.n_dialogues // 5 if self.val_dialogues is None else self.val_dialogues

    @property
    def longest_chain(self) -> int:
        return max(h for h, p in zip(HOP_COUNTS, self.hop_probs) if p > 0)

    def validate(self) -> "SyntheticCorpusConfig":
        """
        Raise ConfigError when the configuration cannot produce a corpus.

        Returns:
            self
        """
        if self.n_dialogues < 1 or self.n_val < 0:
            raise ConfigError("n_dialogues must be >= 1 and val_dialogues >= 0")
        if len(self.hop_probs) != len(HOP_COUNTS) or min(self.hop_probs) < 0:
            raise ConfigError(f"hop_probs needs {len(HOP_COUNTS)} non-negative entries, got {self.hop_probs}")
        if abs(sum(self.hop_probs) - 1.0) > 1e-9:
            raise ConfigError(f"hop probabilities must sum to 1, got {sum(self.hop_probs)}")
        if not 1 <= self.min_turns <= self.max_turns <= DEFAULT_MAX_TURNS:
            raise ConfigError(f"turn range {self.min_turns}..{self.max_turns} must lie in 1..{DEFAULT_MAX_TURNS}")
        if self.longest_chain > self.min_turns:
            raise ConfigError(
                f"a {self.longest_chain}-turn chain does not fit a {self.min_turns}-turn dialogue")
        if not 2 <= self.entity_pool <= len(ENTITY_NOUNS):
            raise ConfigError(f"entity_pool must lie in 2..{len(ENTITY_NOUNS)}, got {self.entity_pool}")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ConfigError(f"distractor_rate must lie in [0, 1], got {self.distractor_rate}")
        if self.grid_rows < 2 or self.grid_dim < 1:
            raise ConfigError(f"visual grid {self.grid_rows}x{self.grid_dim} is too small")
        needed = len(synthetic_vocabulary(self))
        if needed > self.vocab_size:
            raise ConfigError(f"corpus needs {needed} distinct tokens, vocab_size is {self.vocab_size}")
        return self


def synthetic_vocabulary(cfg: SyntheticCorpusConfig) -> List[str]:
    """Every token a corpus generated under cfg can contain."""
    words = set(ENTITY_NOUNS[:cfg.entity_pool]) | set(DISTRACTOR_NOUNS) | set(COLORS) | set(GERUNDS)
    for question, answer in TEMPLATES:
        words.update(tokenize(question) + tokenize(answer))
    return sorted(words - PLACEHOLDER_TOKENS)


class SyntheticCorpus(NamedTuple):
    """Generated train/val dialogues with their planted paths and visual grids."""
    train: Corpus
    val: Corpus
    gold_paths: Dict[str, ReasoningPath]
    grids: Dict[str, np.ndarray]
    hops: Dict[str, int]


def _turn(index: int, template: Tuple[str, str], **slots) -> DialogueTurn:
    question, answer = template
    return DialogueTurn(index, tuple(tokenize(question.format(**slots))), tuple(tokenize(answer.format(**slots))))


def _visual_grid(cfg: SyntheticCorpusConfig, planted: Sequence[Tuple[str, str]],
                 rng: np.random.Generator) -> np.ndarray:
    grid = rng.normal(0.0, GRID_NOISE, size=(cfg.grid_rows, cfg.grid_dim))
    rows = rng.choice(cfg.grid_rows, size=len(planted), replace=False)
    for row, (noun, attribute) in zip(rows, planted):
        grid[row] += hashed_vector(noun, cfg.grid_dim) + hashed_vector(attribute, cfg.grid_dim)
    return grid


def _generate_dialogue(number: int, cfg: SyntheticCorpusConfig,
                       rng: np.random.Generator) -> Tuple[Dialogue, ReasoningPath, np.ndarray]:
    num_turns = int(rng.integers(cfg.min_turns, cfg.max_turns + 1))
    hops = int(rng.choice(HOP_COUNTS, p=cfg.hop_probs))
    entities = [str(noun) for noun in rng.choice(ENTITY_NOUNS[:cfg.entity_pool], size=2, replace=False)]
    colors = [str(color) for color in rng.choice(COLORS, size=2, replace=False)]
    gerunds = [str(gerund) for gerund in rng.permutation(GERUNDS)]
    distractors = [str(noun) for noun in rng.permutation(DISTRACTOR_NOUNS)]

    chain = sorted(rng.choice(np.arange(1, num_turns), size=hops - 1, replace=False).tolist(), reverse=True)
    chain = [num_turns] + [int(turn) for turn in chain]
    turns: Dict[int, DialogueTurn] = {}
    if hops == 1:
        e0, v0 = entities[0], gerunds.pop()
        turns[num_turns] = _turn(num_turns, ONE_HOP, e0=e0, v0=v0)
        planted = [(e0, v0)]
    elif hops == 2:
        e1, c1 = entities[0], colors[0]
        turns[chain[1]] = _turn(chain[1], DESCRIBE, entity=e1, color=c1)
        turns[num_turns] = _turn(num_turns, TWO_HOP_FINAL, e1=e1, c1=c1)
        planted = [(e1, c1)]
    else:
        e1, e2, c2 = entities[0], entities[1], colors[1]
        turns[chain[2]] = _turn(chain[2], DESCRIBE, entity=e2, color=c2)
        turns[chain[1]] = _turn(chain[1], LINK, e1=e1, e2=e2)
        turns[num_turns] = _turn(num_turns, THREE_HOP_FINAL, e1=e1, e2=e2, c2=c2)
        planted = [(e2, c2), (e1, e2)]

    for index in range(1, num_turns):
        if index in turns:
            continue
        if rng.random() < cfg.distractor_rate:
            turns[index] = _turn(index, DISTRACTOR, noun=distractors.pop(), gerund=gerunds.pop())
        else:
            turns[index] = _turn(index, FILLER)

    dialogue_id = f"syn{number:05d}"
    video_ref = f"vid{number:05d}"
    dialogue = Dialogue(dialogue_id, tuple(turns[i] for i in range(1, num_turns + 1)), video_ref)
    return dialogue, ReasoningPath(tuple(chain)), _visual_grid(cfg, planted, rng)


def gen_synthetic_corpus(cfg: SyntheticCorpusConfig, logger=None) -> SyntheticCorpus:
    """
    Generate a train and a validation corpus from one seeded generator.

    Args:
        cfg: Corpus configuration
        logger: Optional Logger for progress

    Returns:
        SyntheticCorpus; identical for identical cfg

    Raises:
        ConfigError: Infeasible configuration
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    total = cfg.n_dialogues + cfg.n_val
    dialogues: List[Dialogue] = []
    gold_paths: Dict[str, ReasoningPath] = {}
    grids: Dict[str, np.ndarray] = {}
    hops: Dict[str, int] = {}

    if logger:
        logger.log_section(f"Generating {total} synthetic dialogues (seed {cfg.seed})")
        logger.create_progress_bar(total, "Dialogues", unit="dlg")
    try:
        for number in range(total):
            dialogue, path, grid = _generate_dialogue(number, cfg, rng)
            dialogue.validate()
            dialogues.append(dialogue)
            gold_paths[dialogue.id] = path
            grids[dialogue.video_ref] = grid
            hops[dialogue.id] = len(path.turns)
            if logger:
                logger.update_progress()
    finally:
        if logger:
            logger.close_progress_bar()

    corpus = SyntheticCorpus(Corpus(dialogues[:cfg.n_dialogues]), Corpus(dialogues[cfg.n_dialogues:]),
                             gold_paths, grids, hops)
    if logger:
        counts = {h: sum(1 for value in hops.values() if value == h) for h in HOP_COUNTS}
        logger.log_success(f"Generated {len(corpus.train)} train / {len(corpus.val)} val dialogues; "
                           f"hop counts {counts}")
    return corpus


def gold_path_records(corpus: SyntheticCorpus) -> List[dict]:
    records = []
    for split, dialogues in (("train", corpus.train), ("val", corpus.val)):
        for dialogue in dialogues:
            path = corpus.gold_paths[dialogue.id]
            records.append({"dialogue": dialogue.id, "split": split, "turn": path.current_turn,
                            "path": path.to_list(), "hops": len(path.turns)})
    return records


def write_synthetic_corpus(corpus: SyntheticCorpus, out_dir: str, writer: OutputWriter):
    """
    Write train.jsonl, val.jsonl, gold_paths.jsonl and grids.dpc into out_dir.
    """
    os.makedirs(out_dir, exist_ok=True)
    save_corpus(corpus.train, os.path.join(out_dir, "train.jsonl"))
    save_corpus(corpus.val, os.path.join(out_dir, "val.jsonl"))
    writer.write_jsonl(gold_path_records(corpus), os.path.join(out_dir, "gold_paths.jsonl"))
    write_container(os.path.join(out_dir, "grids.dpc"), corpus.grids, {"kind": "visual-grids"})


def oracle_recovery(examples: Sequence, gold_paths: Dict[str, ReasoningPath], logger=None) -> float:
    """
    Fraction of final-turn examples whose oracle tie set is exactly the planted path.

    Misses are logged as warnings with the offending candidates.

    Args:
        examples: TurnExamples built at the final turn
        gold_paths: Planted path per dialogue id
        logger: Optional Logger

    Returns:
        Recovery rate in [0, 1]; 0.0 for no examples
    """
    if not examples:
        return 0.0
    hits = 0
    for example in examples:
        planted = gold_paths.get(example.dialogue_id)
        if planted is None:
            continue
        if len(example.ties) == 1 and example.ties[0].turns == planted.turns:
            hits += 1
        elif logger:
            logger.log_warning(
                f"{example.dialogue_id}: planted path {planted.to_list()} not recovered; "
                f"oracle ties {[tie.to_list() for tie in example.ties]}")
    return hits / len(examples)
