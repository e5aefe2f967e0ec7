"""
Lexical span extraction for dialpath.

Deterministic stand-in for a coreference + dependency-parse pipeline:
- Pronoun replacement with the nearest compatible preceding noun head
- Chunking into maximal stopword-free runs of one span kind
- Span kinds: entity, action, attribute (from a small POS lexicon)

The SpanExtractor base class is the plug-in point for heavier backends.
"""

import os
from abc import ABC, abstractmethod
from typing import FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

from core.dialogue import DialogueTurn
from core.errors import ConfigError

ENTITY = "entity"
ACTION = "action"
ATTRIBUTE = "attribute"
SPAN_KINDS = (ENTITY, ACTION, ATTRIBUTE)

DEFAULT_LEXICON_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                                   "data", "lexicon")

MALE_PRONOUNS = frozenset({"he", "him", "his", "himself"})
FEMALE_PRONOUNS = frozenset({"she", "her", "hers", "herself"})
NEUTER_PRONOUNS = frozenset({"it", "its", "itself"})
POSSESSIVE_PRONOUNS = frozenset({"his", "its", "their", "theirs", "hers"})


class LexicalSpan(NamedTuple):
    """A contiguous content-word span of one turn."""
    turn_index: int
    tokens: Tuple[str, ...]
    kind: str

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


class SpanExtractionConfig(NamedTuple):
    """Lexicons and limits for the rule-based extractor."""
    stopwords: FrozenSet[str]
    pronouns: FrozenSet[str]
    max_span_length: int = 3
    attributes: FrozenSet[str] = frozenset()
    actions: FrozenSet[str] = frozenset()
    male_nouns: FrozenSet[str] = frozenset()
    female_nouns: FrozenSet[str] = frozenset()
    person_nouns: FrozenSet[str] = frozenset()


def read_lexicon(path: str, required: bool = True) -> FrozenSet[str]:
    """Read a one-token-per-line lexicon file; '#' starts a comment line."""
    if not os.path.exists(path):
        if required:
            raise ConfigError(f"Lexicon file not found: {path}")
        return frozenset()
    with open(path, 'r', encoding='utf-8') as f:
        return frozenset(
            line.strip().lower() for line in f
            if line.strip() and not line.startswith('#')
        )


def load_span_config(lexicon_dir: Optional[str] = None, max_span_length: int = 3) -> SpanExtractionConfig:
    """
    Build a SpanExtractionConfig from a lexicon directory.

    Expected files: stopwords.txt and pronouns.txt (required), attributes.txt,
    actions.txt, male_nouns.txt, female_nouns.txt, person_nouns.txt (optional).
    """
    if max_span_length < 1:
        raise ConfigError(f"max span length must be >= 1, got {max_span_length}")
    lexicon_dir = lexicon_dir or DEFAULT_LEXICON_DIR
    path = lambda name: os.path.join(lexicon_dir, name)
    return SpanExtractionConfig(
        stopwords=read_lexicon(path("stopwords.txt")),
        pronouns=read_lexicon(path("pronouns.txt")),
        max_span_length=max_span_length,
        attributes=read_lexicon(path("attributes.txt"), required=False),
        actions=read_lexicon(path("actions.txt"), required=False),
        male_nouns=read_lexicon(path("male_nouns.txt"), required=False),
        female_nouns=read_lexicon(path("female_nouns.txt"), required=False),
        person_nouns=read_lexicon(path("person_nouns.txt"), required=False),
    )


class SpanExtractor(ABC):
    """Interface of a coreference + span extraction backend."""

    @abstractmethod
    def resolve_coreferences(self, turns: Sequence[DialogueTurn]) -> List[DialogueTurn]:
        """Replace pronouns with their antecedents."""

    @abstractmethod
    def extract_spans(self, turn: DialogueTurn) -> List[LexicalSpan]:
        """Extract the lexical spans of one (resolved) turn."""

    def extract_token_spans(self, tokens: Sequence[str], turn_index: int) -> List[LexicalSpan]:
        """Extract spans from a bare token sequence, e.g. an expected answer."""
        return self.extract_spans(DialogueTurn(turn_index, tuple(tokens), ()))


class RuleBasedSpanExtractor(SpanExtractor):
    """Lexicon-driven extractor; every decision is a table lookup."""

    def __init__(self, config: SpanExtractionConfig):
        self.config = config

    def classify(self, token: str) -> Optional[str]:
        """Return the span kind of a token, or None when it breaks a chunk."""
        cfg = self.config
        if token in cfg.stopwords or token in cfg.pronouns:
            return None
        if token.startswith("'") or not any(ch.isalnum() for ch in token):
            return None
        if token.isdigit() or token in cfg.attributes:
            return ATTRIBUTE
        if token in cfg.actions or (len(token) >= 5 and token.endswith("ing")):
            return ACTION
        return ENTITY

    def is_noun(self, token: str) -> bool:
        return token[:1].isalpha() and self.classify(token) == ENTITY

    def _compatible(self, pronoun: str, noun: str) -> bool:
        cfg = self.config
        human = noun in cfg.male_nouns or noun in cfg.female_nouns or noun in cfg.person_nouns
        if pronoun in MALE_PRONOUNS:
            return noun in cfg.male_nouns or noun in cfg.person_nouns
        if pronoun in FEMALE_PRONOUNS:
            return noun in cfg.female_nouns or noun in cfg.person_nouns
        if pronoun in NEUTER_PRONOUNS:
            return not human
        return True

    def _resolve_tokens(self, tokens: Sequence[str], antecedents: List[str]) -> Tuple[str, ...]:
        resolved: List[str] = []
        for token in tokens:
            if token not in self.config.pronouns:
                resolved.append(token)
                if self.is_noun(token):
                    antecedents.append(token)
                continue
            antecedent = next((noun for noun in reversed(antecedents) if self._compatible(token, noun)), None)
            if antecedent is None:
                resolved.append(token)
                continue
            resolved.extend(("the", antecedent))
            if token in POSSESSIVE_PRONOUNS:
                resolved.append("'s")
            antecedents.append(antecedent)
        return tuple(resolved)

    def resolve_coreferences(self, turns: Sequence[DialogueTurn]) -> List[DialogueTurn]:
        """
        Replace each pronoun by "the <head>" of the nearest compatible
        preceding noun head. Only preceding text is searched.

        Args:
            turns: Turns ordered by index

        Returns:
            Resolved turns; pronouns without antecedent are left unchanged
        """
        antecedents: List[str] = []
        resolved = []
        for turn in turns:
            question = self._resolve_tokens(turn.question, antecedents)
            answer = self._resolve_tokens(turn.answer, antecedents)
            resolved.append(turn._replace(question=question, answer=answer))
        return resolved

    def _chunk(self, tokens: Sequence[str], turn_index: int) -> List[LexicalSpan]:
        spans = []
        run: List[str] = []
        run_kind = None

        def flush():
            limit = self.config.max_span_length
            for start in range(0, len(run), limit):
                spans.append(LexicalSpan(turn_index, tuple(run[start:start + limit]), run_kind))
            run.clear()

        for token in tokens:
            kind = self.classify(token)
            # Modifiers fold into the noun they precede: "red bag" is one entity.
            if kind == ENTITY and run_kind == ATTRIBUTE and run:
                run_kind = ENTITY
            if kind != run_kind and run:
                flush()
            run_kind = kind
            if kind is not None:
                run.append(token)
        if run:
            flush()
        return spans

    def extract_spans(self, turn: DialogueTurn) -> List[LexicalSpan]:
        """
        Extract deduplicated spans of a turn, question before answer.

        Chunks never cross the question/answer boundary.
        """
        seen = set()
        spans = []
        for part in (turn.question, turn.answer):
            for span in self._chunk(part, turn.turn_index):
                key = (span.tokens, span.kind)
                if key not in seen:
                    seen.add(key)
                    spans.append(span)
        return spans


def resolve_coreferences(turns: Sequence[DialogueTurn],
                         cfg: Optional[SpanExtractionConfig] = None) -> List[DialogueTurn]:
    """Module-level shortcut around RuleBasedSpanExtractor.resolve_coreferences."""
    return RuleBasedSpanExtractor(cfg or load_span_config()).resolve_coreferences(turns)


def extract_spans(turn: DialogueTurn, cfg: Optional[SpanExtractionConfig] = None) -> List[LexicalSpan]:
    """Module-level shortcut around RuleBasedSpanExtractor.extract_spans."""
    return RuleBasedSpanExtractor(cfg or load_span_config()).extract_spans(turn)
