"""
Core modules for dialpath.

This package contains the core functionality including:
- Dialogue corpus model, tokenization and vocabulary
- Lexical span extraction with rule-based coreference resolution
- Word-vector store and span similarity
- Turn-level semantic graphs (compositional, global, fully connected)
- Path enumeration and ground-truth path oracles
- Training examples

The path generator, propagation and checkpoint modules build on the neural
package and are imported from their modules directly.
"""

from .errors import DialPathError
from .dialogue import Corpus, Dialogue, DialogueTurn, Vocabulary, load_corpus
from .span_extractor import LexicalSpan, RuleBasedSpanExtractor, load_span_config
from .embeddings import EmbeddingTable, SpanMatcher
from .semantic_graph import GraphConfig, SemanticGraph, construct_graph
from .oracle_path import ReasoningPath, enumerate_paths, select_ground_truth
from .examples import ExampleBuilder, TurnExample

__all__ = [
    'DialPathError',
    'Corpus', 'Dialogue', 'DialogueTurn', 'Vocabulary', 'load_corpus',
    'LexicalSpan', 'RuleBasedSpanExtractor', 'load_span_config',
    'EmbeddingTable', 'SpanMatcher',
    'GraphConfig', 'SemanticGraph', 'construct_graph',
    'ReasoningPath', 'enumerate_paths', 'select_ground_truth',
    'ExampleBuilder', 'TurnExample',
]
