"""
Model checkpoints on top of the binary array container.

A checkpoint stores the parameters of one or more named models (array names
are "<model>.<parameter>") and a JSON header with the hyperparameters, the
vocabulary and free-form run metadata.
"""

from typing import Dict, Mapping, Optional

import numpy as np

from core.dialogue import Vocabulary
from core.errors import CheckpointError
from neural.layers import Module
from neural.params import ModelParams, params_from_dict
from utils.container import read_container, write_container

FORMAT = "dialpath-checkpoint"


def save_checkpoint(path: str, models: Mapping[str, Module], params: ModelParams, vocab: Vocabulary,
                    meta: Optional[Mapping] = None):
    """
    Write the parameters of every model plus hyperparameters and vocabulary.

    Args:
        path: Output file
        models: Model name -> module
        params: Hyperparameters the models were built with
        vocab: Token vocabulary
        meta: Extra JSON-able metadata (graph config, training history, ...)
    """
    arrays = {}
    for model_name, model in models.items():
        for name, value in model.state_dict().items():
            arrays[f"{model_name}.{name}"] = value
    header = {
        "format": FORMAT,
        "models": sorted(models),
        "params": params._asdict(),
        "vocab": list(vocab.id_to_token),
        "meta": dict(meta or {}),
    }
    write_container(path, arrays, header)


class Checkpoint:
    """A loaded checkpoint: arrays, hyperparameters, vocabulary, metadata."""

    def __init__(self, arrays: Dict[str, np.ndarray], header: dict):
        if header.get("format") != FORMAT:
            raise CheckpointError("container is not a dialpath checkpoint")
        self.arrays = arrays
        self.models = list(header.get("models", []))
        self.params = params_from_dict(header.get("params", {})).validate()
        vocab_tokens = header.get("vocab", [])
        if list(vocab_tokens[:len(Vocabulary.RESERVED)]) != list(Vocabulary.RESERVED):
            raise CheckpointError("checkpoint vocabulary lacks the reserved tokens")
        self.vocab = Vocabulary(vocab_tokens[len(Vocabulary.RESERVED):])
        self.meta = header.get("meta", {})

    def has_model(self, name: str) -> bool:
        return name in self.models

    def restore(self, name: str, model: Module) -> Module:
        """Load the named model's parameters into model."""
        if name not in self.models:
            raise CheckpointError(f"checkpoint has no model '{name}' (has {self.models})")
        model.load_state_dict(self.arrays, prefix=f"{name}.")
        model.eval()
        return model


def load_checkpoint(path: str) -> Checkpoint:
    arrays, header = read_container(path)
    return Checkpoint(arrays, header)

