"""
Configuration management for dialpath.

Handles loading of the flat key = value configuration file and turns the
effective settings into the typed records the pipeline stages consume.
"""

import os
import configparser
from typing import Dict, Optional, Tuple

from core.embeddings import DEFAULT_HASH_DIM, DEFAULT_TAU, HASH_PROJECTION
from core.errors import ConfigError
from core.semantic_graph import BIDIRECT, COMPOSITIONAL, GraphConfig
from core.span_extractor import DEFAULT_LEXICON_DIR, SpanExtractionConfig, load_span_config
from harness.synthetic import SyntheticCorpusConfig
from neural.params import ModelParams, TrainingConfig

SECTION = 'DEFAULT'
SEED_ENV = 'DIALPATH_SEED'

DEFAULTS = {
    'seed': '7',
    # Embeddings and spans
    'embeddings': '',
    'embedding_dim': str(DEFAULT_HASH_DIM),
    'oov_strategy': HASH_PROJECTION,
    'lexicon_dir': '',
    'max_span_length': '3',
    # Graph and oracle
    'semantics': COMPOSITIONAL,
    'direction': BIDIRECT,
    'tau': str(DEFAULT_TAU),
    'forward_todirect': 'false',
    'oracle_mode': 'auto',
    'turns': 'final',
    # Model
    'max_turns': '10',
    'd': '128',
    'heads': '4',
    'dropout': '0.2',
    'ff_multiplier': '4',
    'gcn_layers': '1',
    'decoder_layers': '2',
    'path_self_attention': 'self',
    'context_turn_embedding': 'true',
    'mask_visited': 'true',
    'mask_later': 'true',
    'graph_propagation': 'true',
    'path_propagation': 'true',
    # Training
    'epochs': '50',
    'batch_size': '16',
    'peak_lr': '0.001',
    'warmup_epochs': '5',
    'lr_decay': 'inverse_sqrt',
    'label_smoothing': '0.1',
    'resample_ties': 'true',
    'regime': 'joint',
    # Synthetic corpus
    'n_dialogues': '500',
    'val_dialogues': '',
    'syn_min_turns': '5',
    'syn_max_turns': '8',
    'entity_pool': '40',
    'hop_probs': '0.2,0.4,0.4',
    'distractor_rate': '0.7',
    'vocab_size': '400',
    'grid_rows': '12',
    'grid_dim': '16',
    # Evaluation
    'workers': '4',
    'max_answer_length': '20',
}


class ConfigManager:
    """Manages configuration loading and builds typed configuration records."""

    def __init__(self, logger):
        """
        Initialize the configuration manager.

        Args:
            logger: Logger instance for output
        """
        self.logger = logger
        self.config = configparser.ConfigParser(interpolation=None)
        self.config[SECTION] = dict(DEFAULTS)
        self.config_loaded = False
        self.source = None

    def load_config(self, config_file: Optional[str] = None) -> bool:
        """
        Load configuration from a flat key = value file on top of the defaults.

        A missing section header is allowed; keys outside the defaults are
        rejected so typos do not pass silently. DIALPATH_SEED, when set,
        replaces the seed from the file.

        Args:
            config_file: Path to configuration file (None: defaults only)

        Returns:
            True if successful, False otherwise
        """
        try:
            self.config[SECTION] = dict(DEFAULTS)
            if config_file:
                self.logger.log_info(f"Loading configuration from {config_file}")
                if not os.path.exists(config_file):
                    self.logger.log_error(f"Configuration file not found: {config_file}")
                    return False
                with open(config_file, 'r', encoding='utf-8') as f:
                    content = f.read()
                if not content.lstrip().startswith('['):
                    content = f"[{SECTION}]\n" + content
                parser = configparser.ConfigParser(interpolation=None)
                parser.read_string(content, source=config_file)
                values = dict(parser[SECTION])
                for section in parser.sections():
                    values.update(parser[section])
                unknown = sorted(set(values) - set(DEFAULTS))
                if unknown:
                    self.logger.log_error(f"Unknown configuration keys in {config_file}: {', '.join(unknown)}")
                    return False
                self.config[SECTION].update(values)
                self.source = config_file

            env_seed = os.environ.get(SEED_ENV)
            if env_seed:
                int(env_seed)
                self.config[SECTION]['seed'] = env_seed
                self.logger.log_info(f"Seed {env_seed} taken from {SEED_ENV}")

            self.config_loaded = True
            self.logger.log_success("Configuration loaded successfully")
            return True

        except (configparser.Error, ValueError) as e:
            self.logger.log_error(f"Error loading configuration: {e}")
            return False

    def set(self, key: str, value):
        """Override one key (command-line flags)."""
        if key not in DEFAULTS:
            raise ConfigError(f"unknown configuration key '{key}'")
        if isinstance(value, bool):
            value = 'true' if value else 'false'
        self.config[SECTION][key] = str(value)

    def values(self) -> Dict[str, str]:
        """The effective configuration as a flat dict."""
        return {key: self.config[SECTION][key] for key in sorted(DEFAULTS)}

    def save_config(self, path: str) -> bool:
        """
        Write the effective configuration so the run can be replayed with -c.

        Returns:
            True if successful, False otherwise
        """
        try:
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
            with open(path, 'w', encoding='utf-8') as f:
                f.write("# dialpath effective configuration\n")
                for key, value in self.values().items():
                    f.write(f"{key} = {value}\n")
            self.logger.log_info(f"Saved effective configuration to {path}")
            return True
        except OSError as e:
            self.logger.log_error(f"Error saving configuration: {e}")
            return False

    def _get(self, key: str) -> str:
        return self.config.get(SECTION, key, fallback=DEFAULTS[key])

    def _getint(self, key: str) -> int:
        try:
            return self.config.getint(SECTION, key, fallback=int(DEFAULTS[key]))
        except ValueError:
            raise ConfigError(f"'{key}' must be an integer, got '{self._get(key)}'")

    def _getfloat(self, key: str) -> float:
        try:
            return self.config.getfloat(SECTION, key, fallback=float(DEFAULTS[key]))
        except ValueError:
            raise ConfigError(f"'{key}' must be a number, got '{self._get(key)}'")

    def _getboolean(self, key: str) -> bool:
        try:
            return self.config.getboolean(SECTION, key, fallback=DEFAULTS[key] == 'true')
        except ValueError:
            raise ConfigError(f"'{key}' must be true or false, got '{self._get(key)}'")

    def get_seed(self) -> int:
        return self._getint('seed')

    def get_tau(self) -> float:
        return self._getfloat('tau')

    def get_embeddings_path(self) -> Optional[str]:
        path = self._get('embeddings')
        return path if path else None

    def get_embedding_dim(self) -> int:
        return self._getint('embedding_dim')

    def get_oov_strategy(self) -> str:
        return self._get('oov_strategy')

    def get_oracle_mode(self) -> str:
        return self._get('oracle_mode')

    def get_turns(self) -> str:
        return self._get('turns')

    def get_workers(self) -> int:
        return max(1, self._getint('workers'))

    def get_max_answer_length(self) -> int:
        return self._getint('max_answer_length')

    def get_lexicon_dir(self) -> str:
        return self._get('lexicon_dir') or DEFAULT_LEXICON_DIR

    def get_span_config(self) -> SpanExtractionConfig:
        return load_span_config(self.get_lexicon_dir(), self._getint('max_span_length'))

    def get_graph_config(self) -> GraphConfig:
        cfg = GraphConfig(
            semantics=self._get('semantics'),
            direction=self._get('direction'),
            tau=self.get_tau(),
            forward_todirect=self._getboolean('forward_todirect'),
        )
        cfg.validate()
        return cfg

    def get_model_params(self) -> ModelParams:
        params = ModelParams(
            d=self._getint('d'),
            heads=self._getint('heads'),
            dropout=self._getfloat('dropout'),
            max_turns=self._getint('max_turns'),
            ff_multiplier=self._getint('ff_multiplier'),
            gcn_layers=self._getint('gcn_layers'),
            decoder_layers=self._getint('decoder_layers'),
            path_self_attention=self._get('path_self_attention'),
            context_turn_embedding=self._getboolean('context_turn_embedding'),
            mask_visited=self._getboolean('mask_visited'),
            mask_later=self._getboolean('mask_later'),
            graph_propagation=self._getboolean('graph_propagation'),
            path_propagation=self._getboolean('path_propagation'),
            seed=self.get_seed(),
        )
        return params.validate(self.logger)

    def get_training_config(self) -> TrainingConfig:
        cfg = TrainingConfig(
            epochs=self._getint('epochs'),
            batch_size=self._getint('batch_size'),
            peak_lr=self._getfloat('peak_lr'),
            warmup_epochs=self._getint('warmup_epochs'),
            lr_decay=self._get('lr_decay'),
            label_smoothing=self._getfloat('label_smoothing'),
            resample_ties=self._getboolean('resample_ties'),
            regime=self._get('regime'),
            seed=self.get_seed(),
        )
        return cfg.validate()

    def _get_hop_probs(self) -> Tuple[float, ...]:
        raw = self._get('hop_probs')
        try:
            return tuple(float(part) for part in raw.split(',') if part.strip())
        except ValueError:
            raise ConfigError(f"'hop_probs' must be comma-separated numbers, got '{raw}'")

    def get_synthetic_config(self) -> SyntheticCorpusConfig:
        val = self._get('val_dialogues')
        cfg = SyntheticCorpusConfig(
            n_dialogues=self._getint('n_dialogues'),
            val_dialogues=int(val) if val else None,
            min_turns=self._getint('syn_min_turns'),
            max_turns=self._getint('syn_max_turns'),
            entity_pool=self._getint('entity_pool'),
            hop_probs=self._get_hop_probs(),
            distractor_rate=self._getfloat('distractor_rate'),
            vocab_size=self._getint('vocab_size'),
            grid_rows=self._getint('grid_rows'),
            grid_dim=self._getint('grid_dim'),
            seed=self.get_seed(),
        )
        return cfg.validate()
