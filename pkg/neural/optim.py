"""
Adam optimizer and learning-rate schedule.

- adam_step: one functional Adam update over named arrays
- Adam: stateful wrapper over a parameter list
- WarmupSchedule: linear warm-up, then inverse-sqrt decay (or constant)
"""

from typing import Dict, List, NamedTuple, Optional

import numpy as np

from core.errors import ConfigError, NumericalError
from neural.tensor import Tensor

INVERSE_SQRT = "inverse_sqrt"
NO_DECAY = "none"
LR_DECAYS = (INVERSE_SQRT, NO_DECAY)


class AdamState(NamedTuple):
    """First/second moments per parameter name and the number of updates taken."""
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: Optional[AdamState],
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """
    One Adam update.

    Args:
        params: Parameter arrays by name
        grads: Gradients by name (missing or None means zero)
        state: Moments from the previous step, None on the first step
        lr: Learning rate for this step

    Returns:
        (updated params, new state)

    Raises:
        NumericalError: NaN or Inf in a gradient
    """
    if state is None:
        state = AdamState({k: np.zeros_like(p) for k, p in params.items()},
                          {k: np.zeros_like(p) for k, p in params.items()}, 0)
    t = state.t + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(value)
        if grad.shape != value.shape:
            raise NumericalError(f"gradient of '{name}' has shape {grad.shape}, expected {value.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient for '{name}'")
        m = beta1 * state.m[name] + (1 - beta1) * grad
        v = beta2 * state.v[name] + (1 - beta2) * grad ** 2
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v, t)


class WarmupSchedule:
    """lr(s) = peak * min(s / W, sqrt(W / s)) for inverse_sqrt; constant peak after W for none."""

    def __init__(self, peak_lr: float, warmup_steps: int, decay: str = INVERSE_SQRT):
        if decay not in LR_DECAYS:
            raise ConfigError(f"unknown learning-rate decay '{decay}'")
        if peak_lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {peak_lr}")
        self.peak_lr = peak_lr
        self.warmup_steps = max(1, warmup_steps)
        self.decay = decay

    def __call__(self, step: int) -> float:
        """Learning rate at 1-based step (step 0 is the pre-training state)."""
        step = max(step, 0)
        if step <= self.warmup_steps:
            return self.peak_lr * step / self.warmup_steps
        if self.decay == NO_DECAY:
            return self.peak_lr
        return self.peak_lr * float(np.sqrt(self.warmup_steps / step))


class Adam:
    """Adam over Tensor parameters, driven by a schedule."""

    def __init__(self, parameters: List[Tensor], schedule: WarmupSchedule,
                 beta1: float = 0.9, beta2: float = 0.98, eps: float = 1e-9):
        self.parameters = list(parameters)
        self.schedule = schedule
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: Optional[AdamState] = None

    @property
    def step_count(self) -> int:
        return self.state.t if self.state is not None else 0

    def current_lr(self) -> float:
        return self.schedule(self.step_count + 1)

    def step(self, scale: float = 1.0) -> float:
        """
        Apply one update from the accumulated gradients.

        Args:
            scale: Multiplier applied to gradients (1 / examples in the batch)

        Returns:
            Learning rate used
        """
        names = [str(i) for i in range(len(self.parameters))]
        params = {name: p.data for name, p in zip(names, self.parameters)}
        grads = {name: (p.grad * scale if p.grad is not None else None)
                 for name, p in zip(names, self.parameters)}
        lr = self.current_lr()
        updated, self.state = adam_step(params, grads, self.state, lr, self.beta1, self.beta2, self.eps)
        for name, p in zip(names, self.parameters):
            p.data = updated[name]
        return lr

    def zero_grad(self):
        for p in self.parameters:
            p.zero_grad()
