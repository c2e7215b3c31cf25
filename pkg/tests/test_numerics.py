import numpy as np
import pytest
from scipy import stats

from gridseq.errors import EvaluationError, ShapeError
from gridseq.model import FreezeMask, init_parameters, loss_and_gradients
from gridseq.model import ModelConfig
from gridseq.numerics import (MASK_SENTINEL, gelu, gelu_grad, grad_check,
    layer_norm, layer_norm_backward, layer_norm_forward, matmul, row_sum,
    softmax_rows)


def test_matmul_examples():
    M = np.arange(9.0).reshape(3, 3)
    assert (matmul(np.eye(3), M) == M).all()
    assert matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))[0,0] == 11
    assert (matmul(M, np.zeros((3, 2))) == 0).all()


@pytest.mark.parametrize("ordered", [False, True])
def test_matmul_matches_numpy_and_is_associative(ordered):
    rng = np.random.default_rng(0)
    for trial in range(20):
        (a, b, c) = rng.normal(size=(3, 4, 4))
        assert np.allclose(matmul(a, b, ordered), a.dot(b), atol=1e-12)
        left = matmul(matmul(a, b, ordered), c, ordered)
        right = matmul(a, matmul(b, c, ordered), ordered)
        assert abs(left - right).max() < 1e-9


def test_ordered_matmul_slices_are_independent():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 3, 7))
    b = rng.normal(size=(7, 4))
    batched = matmul(a, b, ordered=True)
    for i in range(5):
        assert np.array_equal(batched[i], matmul(a[i], b, ordered=True))


def test_matmul_dimension_mismatch():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        matmul(np.ones(3), np.ones((3, 1)))


def test_row_sum_ordered_keeps_axis():
    x = np.arange(12.0).reshape(3, 4)
    assert row_sum(x, ordered=True).shape == (3, 1)
    assert np.array_equal(row_sum(x, ordered=True)[:,0], x.sum(axis=1))


def test_softmax_examples():
    assert np.allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])
    masked = softmax_rows(np.array([[3.7, MASK_SENTINEL]]))
    assert masked[0,1] == 0.0 and masked[0,0] == 1.0
    p = softmax_rows(np.array([[1.0, 2.0, 3.0]]))[0]
    assert np.allclose(p, [0.0900, 0.2447, 0.6652], atol=5e-5)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    m = rng.normal(scale=30.0, size=(50, 9))
    for ordered in (False, True):
        s = softmax_rows(m, ordered).sum(axis=1)
        assert abs(s - 1).max() < 1e-12


def test_layer_norm_examples():
    ones = np.ones(4)
    zeros = np.zeros(4)
    assert abs(layer_norm(np.full(4, 2.5), ones, zeros)).max() < 1e-12
    out = layer_norm(np.array([-1.0, 1.0]), np.ones(2), np.zeros(2), eps=0.0)
    assert np.allclose(out, [-1.0, 1.0])
    bias = np.array([0.1, -0.2, 0.3, 0.4])
    v = np.array([1.0, 5.0, -2.0, 0.5])
    assert np.array_equal(layer_norm(v, zeros, bias), bias)


def test_layer_norm_moments():
    rng = np.random.default_rng(3)
    for trial in range(20):
        v = rng.normal(scale=rng.uniform(10.0, 50.0), size=32)
        out = layer_norm(v, np.ones(32), np.zeros(32), eps=1e-5)
        assert abs(out.mean()) <= 1e-10
        assert abs(out.var() - 1.0) < 1e-6


def test_layer_norm_shape_check():
    with pytest.raises(ShapeError):
        layer_norm(np.ones(4), np.ones(3), np.zeros(4))


def test_layer_norm_backward_matches_differences():
    rng = np.random.default_rng(4)
    v = rng.normal(size=(3, 6))
    gain = rng.normal(size=6)
    bias = rng.normal(size=6)
    w = rng.normal(size=(3, 6))
    (out, cache) = layer_norm_forward(v, gain, bias)
    (d_v, d_gain, d_bias) = layer_norm_backward(w, cache)

    def f(arrays):
        return float((layer_norm(arrays["v"], arrays["g"], arrays["b"])*w
            ).sum()), {"v": d_v, "g": d_gain, "b": d_bias}

    err = grad_check(f, {"v": v.copy(), "g": gain.copy(), "b": bias.copy()},
        coords_per_array=18)
    assert err < 1e-8


def test_gelu_examples():
    assert gelu(0.0) == 0.0
    assert abs(gelu(10.0) - 10.0) < 1e-6
    assert abs(gelu(1.0) - stats.norm.cdf(1.0)) < 1e-12
    assert abs(gelu(1.0) - 0.84134) < 1e-5


def test_gelu_grad():
    x = np.linspace(-4, 4, 41)
    h = 1e-6
    numeric = (gelu(x+h) - gelu(x-h)) / (2*h)
    assert abs(gelu_grad(x) - numeric).max() < 1e-8


def test_grad_check_quadratic():
    def f(p):
        w = p["w"]
        return float(w.dot(w)), {"w": 2*w}

    assert grad_check(f, {"w": np.array([1.0, 2.0])}) < 1e-8


def test_grad_check_detects_wrong_gradient():
    def f(p):
        w = p["w"]
        return float(w.dot(w)), {"w": 3*w}

    assert grad_check(f, {"w": np.array([1.0, 2.0])}) > 0.1


def test_grad_check_restores_parameters():
    w = np.array([0.3, -0.7, 1.1])
    before = w.copy()
    grad_check(lambda p: (float((p["w"]**3).sum()), {"w": 3*p["w"]**2}),
        {"w": w})
    assert np.array_equal(w, before)


def test_grad_check_non_finite_objective():
    def f(p):
        return float("nan"), {"w": np.zeros(2)}

    with pytest.raises(EvaluationError):
        grad_check(f, {"w": np.zeros(2)})


def _model_objective(params, patches, targets, trainable=None):
    def f(arrays):
        return loss_and_gradients(params, patches, targets,
            trainable=trainable)
    return f


def _model_problem(config, seed=0, batch=2):
    rng = np.random.default_rng(seed)
    params = init_parameters(config, seed)
    for name in params.names():
        # larger weights so the nonlinearities are exercised
        if not name.endswith(("gain", "bias")):
            params.arrays[name] = rng.normal(0.0, 0.3,
                size=params[name].shape)
    patches = rng.normal(size=(batch, config.P, config.L_p))
    targets = rng.normal(size=(batch, config.L_pred))
    return (params, patches, targets)


def test_grad_check_two_layer_model():
    config = ModelConfig(L=2, h=2, d=16, d_ff=32, L_seq=20, L_p=8, S=4,
        L_pred=2).validate()
    assert config.P == 4
    (params, patches, targets) = _model_problem(config)
    err = grad_check(_model_objective(params, patches, targets),
        params.arrays)
    assert err < 1e-4


def test_grad_check_desk_model():
    config = ModelConfig.profile("desk").validate()
    assert config.P == 7
    (params, patches, targets) = _model_problem(config, seed=1)
    err = grad_check(_model_objective(params, patches, targets),
        params.arrays, coords_per_array=4)
    assert err < 1e-4


def test_frozen_arrays_get_no_gradient():
    config = ModelConfig(L=1, h=2, d=8, d_ff=16, L_seq=24, L_p=8,
        S=8).validate()
    (params, patches, targets) = _model_problem(config)
    mask = FreezeMask.default(params.names())
    (loss, grads) = loss_and_gradients(params, patches, targets,
        trainable=mask.trainable_names())
    assert set(grads) == set(mask.trainable_names())
    err = grad_check(_model_objective(params, patches, targets,
        mask.trainable_names()), params.arrays)
    assert err < 1e-4
