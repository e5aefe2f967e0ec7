"""
Dialogue data model for dialpath.

This module contains the core dialogue structures including:
- Tokenization (lowercase, punctuation split, clitics kept as tokens)
- DialogueTurn / Dialogue / DialogueContext records
- Vocabulary with reserved PAD/OOV/BOS/EOS ids
- JSONL corpus loading and saving
- Context slicing at a turn
"""

import json
import re
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

from core.errors import CorpusFormatError, ValidationError

DEFAULT_MAX_TURNS = 10

# Clitics ('s, 're, 't) first, then word runs, then any single non-space symbol.
_TOKEN_PATTERN = re.compile(r"'\w+|\w+|[^\w\s]")


def tokenize(text: str) -> List[str]:
    """
    Split text into lowercase tokens.

    Rules, applied left to right after lowercasing:
    1. an apostrophe followed by word characters is one token ("'s", "'re")
    2. a run of word characters is one token
    3. every other non-whitespace character is its own token

    Args:
        text: Raw UTF-8 text

    Returns:
        Token list (empty for empty text)
    """
    return _TOKEN_PATTERN.findall(text.lower())


class DialogueTurn(NamedTuple):
    """One question/answer pair at a 1-based position in a dialogue."""
    turn_index: int
    question: Tuple[str, ...]
    answer: Tuple[str, ...] = ()

    @property
    def tokens(self) -> Tuple[str, ...]:
        """Question and answer concatenated, the unit fed to span extraction."""
        return self.question + self.answer

    def validate(self, dialogue_id: str = "?"):
        """Raise ValidationError when the turn breaks an invariant."""
        if self.turn_index < 1:
            raise ValidationError(f"dialogue {dialogue_id}: turn index {self.turn_index} < 1")
        if not self.question:
            raise ValidationError(f"dialogue {dialogue_id}: turn {self.turn_index} has an empty question")
        for token in self.question + self.answer:
            if token != token.lower():
                raise ValidationError(
                    f"dialogue {dialogue_id}: turn {self.turn_index} token '{token}' is not lowercase")


class DialogueContext(NamedTuple):
    """Completed turns strictly before the current turn."""
    turns: Tuple[DialogueTurn, ...] = ()

    def __len__(self) -> int:
        return len(self.turns)


class Dialogue(NamedTuple):
    """A dialogue with its ordered turns and an optional visual feature reference."""
    id: str
    turns: Tuple[DialogueTurn, ...]
    video_ref: Optional[str] = None

    @property
    def num_turns(self) -> int:
        return len(self.turns)

    def turn(self, t: int) -> DialogueTurn:
        """Return turn t (1-based)."""
        if not 1 <= t <= len(self.turns):
            raise ValidationError(f"dialogue {self.id}: turn {t} out of range 1..{len(self.turns)}")
        return self.turns[t - 1]

    def validate(self, max_turns: int = DEFAULT_MAX_TURNS):
        """
        Check every dialogue invariant.

        Raises:
            ValidationError: naming the dialogue id
        """
        if not self.turns:
            raise ValidationError(f"dialogue {self.id}: no turns")
        if len(self.turns) > max_turns:
            raise ValidationError(
                f"dialogue {self.id}: {len(self.turns)} turns exceeds maximum {max_turns}")
        for position, turn in enumerate(self.turns, 1):
            if turn.turn_index != position:
                indices = [t.turn_index for t in self.turns]
                raise ValidationError(
                    f"dialogue {self.id}: turn indices {indices} are not consecutive from 1")
            turn.validate(self.id)


class Corpus:
    """An ordered collection of dialogues with lookup by id."""

    def __init__(self, dialogues: Iterable[Dialogue] = ()):
        self.dialogues: List[Dialogue] = list(dialogues)
        self._by_id: Dict[str, Dialogue] = {}
        for dialogue in self.dialogues:
            if dialogue.id in self._by_id:
                raise ValidationError(f"duplicate dialogue id {dialogue.id}")
            self._by_id[dialogue.id] = dialogue

    def __len__(self) -> int:
        return len(self.dialogues)

    def __iter__(self) -> Iterator[Dialogue]:
        return iter(self.dialogues)

    def __eq__(self, other) -> bool:
        return isinstance(other, Corpus) and self.dialogues == other.dialogues

    def get(self, dialogue_id: str) -> Dialogue:
        """Return the dialogue with the given id."""
        if dialogue_id not in self._by_id:
            raise ValidationError(f"unknown dialogue id {dialogue_id}")
        return self._by_id[dialogue_id]


class Vocabulary:
    """Injective token-to-id map with reserved special ids."""

    PAD = "<pad>"
    OOV = "<oov>"
    BOS = "<bos>"
    EOS = "<eos>"
    RESERVED = (PAD, OOV, BOS, EOS)

    def __init__(self, tokens: Iterable[str] = ()):
        self.id_to_token: List[str] = list(self.RESERVED)
        self.token_to_id: Dict[str, int] = {tok: i for i, tok in enumerate(self.id_to_token)}
        for token in tokens:
            self.add(token)

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "Vocabulary":
        """Build a vocabulary from every token of a corpus, in sorted order."""
        seen = set()
        for dialogue in corpus:
            for turn in dialogue.turns:
                seen.update(turn.question)
                seen.update(turn.answer)
        return cls(sorted(seen))

    def add(self, token: str) -> int:
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self.token_to_id[token]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def oov_id(self) -> int:
        return 1

    @property
    def bos_id(self) -> int:
        return 2

    @property
    def eos_id(self) -> int:
        return 3

    def encode(self, tokens: Sequence[str]) -> List[int]:
        """Map tokens to ids, unknown tokens to the OOV id."""
        return [self.token_to_id.get(token, self.oov_id) for token in tokens]

    def decode(self, ids: Sequence[int]) -> List[str]:
        """Map ids back to tokens, stopping at the first EOS."""
        tokens = []
        for index in ids:
            if index == self.eos_id:
                break
            if index in (self.pad_id, self.bos_id):
                continue
            tokens.append(self.id_to_token[index])
        return tokens


def _turn_from_record(record: dict, position: int, dialogue_id: str, line_number: int) -> DialogueTurn:
    if not isinstance(record, dict) or "q" not in record:
        raise CorpusFormatError(f"dialogue {dialogue_id}: turn {position} lacks a 'q' field", line_number)
    # Turn index is implicit by position; an explicit one must agree.
    try:
        turn_index = int(record.get("turn", position))
    except (TypeError, ValueError):
        raise CorpusFormatError(f"dialogue {dialogue_id}: turn {position} has a non-integer index", line_number)
    return DialogueTurn(
        turn_index=turn_index,
        question=tuple(tokenize(record["q"])),
        answer=tuple(tokenize(record.get("a") or "")),
    )


def parse_dialogue(line: str, line_number: int = 0, max_turns: int = DEFAULT_MAX_TURNS) -> Dialogue:
    """
    Parse and validate one JSONL dialogue record.

    Raises:
        CorpusFormatError: malformed JSON or missing fields
        ValidationError: invariant violations
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"malformed JSON: {e.msg}", line_number)
    if not isinstance(record, dict) or "id" not in record or "turns" not in record:
        raise CorpusFormatError("record needs 'id' and 'turns'", line_number)
    dialogue_id = str(record["id"])
    turns = tuple(
        _turn_from_record(turn, position, dialogue_id, line_number)
        for position, turn in enumerate(record["turns"], 1)
    )
    dialogue = Dialogue(id=dialogue_id, turns=turns, video_ref=record.get("video_ref"))
    dialogue.validate(max_turns)
    return dialogue


def load_corpus(path: str, max_turns: int = DEFAULT_MAX_TURNS) -> Corpus:
    """
    Load a JSONL corpus, one dialogue per line.

    Args:
        path: File path
        max_turns: Maximum dialogue length

    Returns:
        Corpus with every dialogue validated
    """
    dialogues = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, 1):
            if not line.strip():
                continue
            dialogues.append(parse_dialogue(line, line_number, max_turns))
    return Corpus(dialogues)


def dialogue_to_record(dialogue: Dialogue) -> dict:
    return {
        "id": dialogue.id,
        "turns": [{"q": " ".join(turn.question), "a": " ".join(turn.answer)} for turn in dialogue.turns],
        "video_ref": dialogue.video_ref,
    }


def save_corpus(corpus: Corpus, path: str):
    """Write a corpus as JSONL; load_corpus on the result yields an equal corpus."""
    with open(path, 'w', encoding='utf-8') as f:
        for dialogue in corpus:
            f.write(json.dumps(dialogue_to_record(dialogue), ensure_ascii=False))
            f.write("\n")


def context_at(dialogue: Dialogue, t: int) -> Tuple[DialogueContext, DialogueTurn]:
    """
    Slice a dialogue at turn t.

    Args:
        dialogue: Source dialogue
        t: Current turn index, 1 <= t <= T

    Returns:
        (context of turns 1..t-1, current turn with its answer withheld)
    """
    current = dialogue.turn(t)
    return DialogueContext(turns=dialogue.turns[:t - 1]), current._replace(answer=())
