import numpy as np
import pytest

from core.errors import ConfigError, NumericalError
from neural.optim import Adam, WarmupSchedule, adam_step
from neural.params import ModelParams, TrainingConfig, params_from_dict
from neural.tensor import Tensor


def test_first_adam_step_moves_by_lr():
    params = {"w": np.array([1.0, -1.0])}
    grads = {"w": np.array([0.5, -3.0])}
    updated, state = adam_step(params, grads, None, lr=0.1)
    # Bias-corrected first step is lr * sign(grad).
    assert np.allclose(updated["w"], [0.9, -0.9])
    assert state.t == 1


def test_missing_gradient_is_zero():
    updated, _ = adam_step({"w": np.ones(2)}, {}, None, lr=0.1)
    assert np.array_equal(updated["w"], np.ones(2))


def test_non_finite_gradient_raises():
    with pytest.raises(NumericalError):
        adam_step({"w": np.ones(2)}, {"w": np.array([np.nan, 0.0])}, None, lr=0.1)
    with pytest.raises(NumericalError):
        adam_step({"w": np.ones(2)}, {"w": np.ones(3)}, None, lr=0.1)


def test_adam_minimizes_quadratic():
    x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    optimizer = Adam([x], WarmupSchedule(0.2, 1))
    for _ in range(500):
        optimizer.zero_grad()
        ((x - 1.0) ** 2).sum().backward()
        optimizer.step()
    assert np.allclose(x.data, [1.0, 1.0], atol=0.05)
    assert optimizer.step_count == 500


def test_warmup_schedule():
    schedule = WarmupSchedule(1e-3, 4)
    assert schedule(0) == 0.0
    assert schedule(2) == pytest.approx(5e-4)
    assert schedule(4) == pytest.approx(1e-3)
    assert schedule(16) == pytest.approx(5e-4)
    flat = WarmupSchedule(1e-3, 4, "none")
    assert flat(100) == pytest.approx(1e-3)
    with pytest.raises(ConfigError):
        WarmupSchedule(1e-3, 4, "cosine")
    with pytest.raises(ConfigError):
        WarmupSchedule(0.0, 4)


def test_model_params_validation():
    ModelParams().validate()
    with pytest.raises(ConfigError):
        ModelParams(d=7).validate()
    with pytest.raises(ConfigError):
        ModelParams(d=8, heads=3).validate()
    with pytest.raises(ConfigError):
        ModelParams(dropout=0.6).validate()
    with pytest.raises(ConfigError):
        ModelParams(gcn_layers=4).validate()
    with pytest.raises(ConfigError):
        ModelParams(path_self_attention="cross").validate()


def test_model_params_warns_outside_tuned_range(logger, log_stream):
    ModelParams(d=8, heads=2, dropout=0.0).validate(logger)
    output = log_stream.getvalue()
    assert "model width 8" in output
    assert "dropout 0.0" in output


def test_params_from_dict_ignores_unknown_keys():
    params = params_from_dict({"d": 16, "heads": 2, "colour": "blue"})
    assert params.d == 16 and params.heads == 2
    assert params.eop_class == 10
    assert params.num_path_classes == 11


def test_training_config_validation():
    cfg = TrainingConfig(batch_size=4, warmup_epochs=2).validate()
    assert cfg.warmup_steps(10) == 6
    assert TrainingConfig(warmup_epochs=0).warmup_steps(10) == 1
    for bad in ({"epochs": 0}, {"peak_lr": 0.0}, {"label_smoothing": 1.0},
                {"lr_decay": "step"}, {"regime": "alternating"}):
        with pytest.raises(ConfigError):
            TrainingConfig(**bad).validate()
