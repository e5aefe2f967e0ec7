"""
Experiment harness for dialpath.

This package contains:
- synthetic: dialogue corpora with planted reasoning chains and visual grids
- baselines: last-n, random and oracle path strategies
- evaluation: path exact match, edge F1, answer accuracy and BLEU
- runner: the pipeline stages behind the command line
"""

from .baselines import STRATEGIES, baseline_path, last_n_path, parse_strategy, random_path
from .evaluation import EvalReport, Prediction, corpus_bleu, evaluate
from .synthetic import (SyntheticCorpus, SyntheticCorpusConfig, gen_synthetic_corpus, oracle_recovery,
                        write_synthetic_corpus)

__all__ = [
    'STRATEGIES', 'baseline_path', 'last_n_path', 'parse_strategy', 'random_path',
    'EvalReport', 'Prediction', 'corpus_bleu', 'evaluate',
    'SyntheticCorpus', 'SyntheticCorpusConfig', 'gen_synthetic_corpus', 'oracle_recovery',
    'write_synthetic_corpus',
]
