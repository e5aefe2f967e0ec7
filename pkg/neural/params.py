"""
Model hyperparameters shared by the path generator and the propagation model.
"""

from typing import NamedTuple, Optional

from core.errors import ConfigError

TUNED_WIDTHS = (128, 256)
TUNED_HEADS = (1, 2, 4, 8, 16)
TUNED_DROPOUT = (0.1, 0.5)


class ModelParams(NamedTuple):
    """Width, heads, dropout and the stack depths of every model."""
    d: int = 128
    heads: int = 4
    dropout: float = 0.2
    max_turns: int = 10
    ff_multiplier: int = 4
    gcn_layers: int = 1
    decoder_layers: int = 2
    path_self_attention: str = "self"
    context_turn_embedding: bool = True
    mask_visited: bool = True
    mask_later: bool = True
    graph_propagation: bool = True
    path_propagation: bool = True
    seed: int = 7

    def validate(self, logger=None) -> "ModelParams":
        """
        Raise ConfigError on unusable values; warn on values outside the tuned ranges.

        Args:
            logger: Optional Logger for range warnings

        Returns:
            self
        """
        if self.d < 2 or self.d % 2:
            raise ConfigError(f"model width d must be even and >= 2, got {self.d}")
        if self.heads < 1 or self.d % self.heads:
            raise ConfigError(f"width {self.d} is not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout <= 0.5:
            raise ConfigError(f"dropout must lie in [0, 0.5], got {self.dropout}")
        if self.max_turns < 1:
            raise ConfigError(f"max_turns must be >= 1, got {self.max_turns}")
        if not 1 <= self.gcn_layers <= 3:
            raise ConfigError(f"gcn_layers must be 1..3, got {self.gcn_layers}")
        if self.decoder_layers < 1:
            raise ConfigError(f"decoder_layers must be >= 1, got {self.decoder_layers}")
        if self.path_self_attention not in ("self", "previous_outputs"):
            raise ConfigError(f"unknown path self-attention mode '{self.path_self_attention}'")
        if logger is not None:
            if self.d not in TUNED_WIDTHS:
                logger.log_warning(f"model width {self.d} outside tuned widths {TUNED_WIDTHS}")
            if self.heads not in TUNED_HEADS:
                logger.log_warning(f"{self.heads} heads outside tuned head counts {TUNED_HEADS}")
            if not TUNED_DROPOUT[0] <= self.dropout <= TUNED_DROPOUT[1]:
                logger.log_warning(f"dropout {self.dropout} outside tuned range {TUNED_DROPOUT}")
        return self

    @property
    def eop_class(self) -> int:
        return self.max_turns

    @property
    def num_path_classes(self) -> int:
        return self.max_turns + 1


def params_from_dict(values: dict, base: Optional[ModelParams] = None) -> ModelParams:
    """Rebuild ModelParams from a (checkpoint header) dict, ignoring unknown keys."""
    base = base or ModelParams()
    known = {key: values[key] for key in ModelParams._fields if key in values}
    return base._replace(**known)


class TrainingConfig(NamedTuple):
    """Optimization settings for path and joint training."""
    epochs: int = 50
    batch_size: int = 16
    peak_lr: float = 1e-3
    warmup_epochs: int = 5
    lr_decay: str = "inverse_sqrt"
    label_smoothing: float = 0.1
    resample_ties: bool = True
    regime: str = "joint"
    seed: int = 7

    def validate(self) -> "TrainingConfig":
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.peak_lr <= 0:
            raise ConfigError(f"peak_lr must be positive, got {self.peak_lr}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing must lie in [0, 1), got {self.label_smoothing}")
        if self.lr_decay not in ("inverse_sqrt", "none"):
            raise ConfigError(f"unknown learning-rate decay '{self.lr_decay}'")
        if self.regime not in ("joint", "pipeline"):
            raise ConfigError(f"unknown training regime '{self.regime}'")
        return self

    def warmup_steps(self, num_examples: int) -> int:
        """Warm-up length in optimizer steps: warmup_epochs worth of batches."""
        batches = -(-num_examples // self.batch_size)
        return max(1, self.warmup_epochs * batches)
