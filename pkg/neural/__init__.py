"""
Neural core package for dialpath.

This package contains:
- tensor: float64 reverse-mode autodiff
- functional: masked softmax, position encoding, smoothed cross-entropy
- layers: Linear, Embedding, LayerNorm, attention and transformer blocks
- optim: Adam with warm-up schedule
- params: ModelParams and TrainingConfig
- gradcheck: finite-difference gradient checking
"""

from .functional import (S_MASKED, cross_entropy_with_label_smoothing, glorot_uniform,
                         masked_log_softmax, masked_softmax, pos_encode)
from .gradcheck import gradcheck, numerical_gradient
from .layers import (MLP, Dropout, Embedding, LayerNorm, Linear, Module, MultiHeadAttention,
                     TransformerBlock, causal_mask, transformer_block)
from .optim import Adam, AdamState, WarmupSchedule, adam_step
from .params import ModelParams, TrainingConfig, params_from_dict
from .tensor import Tensor, as_tensor, concat, no_grad, stack

__all__ = [
    'Tensor', 'as_tensor', 'concat', 'stack', 'no_grad',
    'S_MASKED', 'masked_softmax', 'masked_log_softmax', 'pos_encode',
    'cross_entropy_with_label_smoothing', 'glorot_uniform',
    'Module', 'Linear', 'Embedding', 'LayerNorm', 'Dropout', 'MLP',
    'MultiHeadAttention', 'TransformerBlock', 'transformer_block', 'causal_mask',
    'Adam', 'AdamState', 'WarmupSchedule', 'adam_step',
    'ModelParams', 'TrainingConfig', 'params_from_dict',
    'gradcheck', 'numerical_gradient',
]
