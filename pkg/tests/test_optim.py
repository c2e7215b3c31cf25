import numpy as np
import pytest

from gridseq.errors import ConfigError
from gridseq.model import FreezeMask
from gridseq.optim import (Adam, CosineSchedule, EarlyStopping,
    clip_global_norm, global_norm)


def test_adam_minimizes_quadratic(params):
    mask = FreezeMask.default(params.names())
    params.arrays["head.b_out"][...] = 1.0
    opt = Adam(params, mask, lr=0.05)
    for k in range(200):
        b = params["head.b_out"]
        opt.step({"head.b_out": 2*b})
    assert abs(params["head.b_out"]).max() < 0.1


def test_adam_zero_gradient_is_noop(params):
    mask = FreezeMask.default(params.names())
    before = params.copy()
    opt = Adam(params, mask)
    opt.step({n: np.zeros_like(params[n]) for n in mask.trainable_names()})
    for name in params.names():
        assert np.array_equal(params[name], before[name])


def test_adam_frozen_arrays(params):
    mask = FreezeMask.default(params.names())
    opt = Adam(params, mask)
    assert "blocks.0.attn.W_Q" not in opt.m
    assert "blocks.0.ln1.gain" in opt.m
    with pytest.raises(ConfigError):
        opt.step({"blocks.0.attn.W_Q": np.ones((8, 8))})


def test_cosine_schedule_endpoints():
    sched = CosineSchedule(1e-3, 10)
    assert sched.lr(1) == pytest.approx(1e-3)
    assert sched.lr(10) == pytest.approx(1e-5)
    rates = [sched.lr(e) for e in range(1, 11)]
    assert all(a > b for (a, b) in zip(rates[:-1], rates[1:]))
    assert CosineSchedule(0.1, 1).lr(1) == 0.1
    with pytest.raises(ConfigError):
        CosineSchedule(0.0, 5)


def test_early_stopping():
    stop = EarlyStopping(patience=2, min_delta=0.01)
    assert stop.update(1.0, 1) == (True, False)
    assert stop.update(0.995, 2) == (False, False)
    assert stop.update(0.5, 3) == (True, False)
    assert stop.update(0.6, 4) == (False, False)
    assert stop.update(0.6, 5) == (False, True)
    assert stop.best_epoch == 3


def test_clip_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert global_norm(grads) == 5.0
    (clipped, norm, did) = clip_global_norm(grads, 1.0)
    assert did and norm == 5.0
    assert global_norm(clipped) == pytest.approx(1.0)
    (same, norm, did) = clip_global_norm(grads, 10.0)
    assert not did and same is grads
