import numpy as np
import pytest

from conftest import tiny_config
from gridseq.datapipe import WindowSample, normalize
from gridseq.errors import ConfigError, ShapeError
from gridseq.model import (BIDIRECTIONAL, FreezeMask, ModelConfig,
    ModelParameters, attention, causal_mask, embed, forward, forward_batch,
    init_parameters, parameter_shapes, project, transformer_block)
from gridseq.numerics import MASK_SENTINEL, layer_norm


def test_desk_parameter_counts():
    params = init_parameters(ModelConfig.profile("desk").validate())
    assert params.count() == 151169
    mask = FreezeMask.default(params.names())
    assert params.count(mask.trainable_names()) == 2753
    assert params.trainable_fraction(mask) < 0.02


def test_default_mask_freezes_block_weights_only():
    mask = FreezeMask.default(parameter_shapes(tiny_config(L=2)).keys())
    assert mask["embed.W_p"] and mask["head.W_out"]
    assert mask["blocks.1.ln2.gain"]
    assert not mask["blocks.0.attn.W_Q"]
    assert not mask["blocks.1.ffn.b_1"]
    assert FreezeMask.all_trainable(["a", "b"]).frozen_names() == []


def test_config_validation():
    with pytest.raises(ConfigError):
        tiny_config(d=10, h=3)
    with pytest.raises(ConfigError):
        tiny_config(S=9)
    with pytest.raises(ConfigError):
        tiny_config(L_p=30)
    with pytest.raises(ConfigError):
        ModelConfig.profile("huge")
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"L": 1, "layers": 2})
    config = ModelConfig.profile("enc", L_seq=33)
    assert config.attention_mode == BIDIRECTIONAL and config.L_seq == 33
    assert ModelConfig.from_dict(tiny_config().to_dict()) == tiny_config()


def test_init_is_deterministic(config):
    a = init_parameters(config, seed=4)
    b = init_parameters(config, seed=4)
    c = init_parameters(config, seed=5)
    for name in a.names():
        assert np.array_equal(a[name], b[name])
    assert not np.array_equal(a["embed.W_p"], c["embed.W_p"])
    assert (a["blocks.0.ln1.gain"] == 1).all()
    assert (a["embed.E_pos"] == 0).all()


def test_parameters_reject_bad_shapes(params):
    arrays = dict(params.arrays)
    arrays["head.b_out"] = np.zeros(2)
    with pytest.raises(ShapeError):
        ModelParameters(params.config, arrays)
    del arrays["head.b_out"]
    with pytest.raises(ShapeError):
        ModelParameters(params.config, arrays)


def test_causal_mask():
    M = causal_mask(3)
    assert M[0,0] == 0 and M[2,0] == 0
    assert M[0,2] == MASK_SENTINEL
    with pytest.raises(ShapeError):
        causal_mask(0)


def test_first_position_attends_only_to_itself(params):
    rng = np.random.default_rng(0)
    z = rng.normal(size=(params.config.P, params.config.d))
    (out, A) = attention(z, params, 0)
    assert A.shape == (2, 3, 3)
    for head_weights in A:
        assert np.array_equal(head_weights[0], [1.0, 0.0, 0.0])
        assert np.allclose(head_weights.sum(axis=1), 1.0)


def test_causal_outputs_ignore_later_patches():
    config = tiny_config(L=2, L_seq=40, reduction="ordered")
    assert config.P == 5
    params = init_parameters(config, seed=1)
    rng = np.random.default_rng(2)
    for trial in range(100):
        patches = rng.normal(size=(1, 5, 8))
        r = rng.integers(0, 4)
        changed = patches.copy()
        changed[0,r+1:] = rng.normal(size=(4-r, 8))
        (_, _, a) = forward_batch(patches, params, trace=True)
        (_, _, b) = forward_batch(changed, params, trace=True)
        for (za, zb) in zip(a.hidden, b.hidden):
            assert np.array_equal(za[0,:r+1], zb[0,:r+1])
            assert not np.array_equal(za[0,r+1], zb[0,r+1])


def test_bidirectional_outputs_see_later_patches():
    config = tiny_config(attention_mode=BIDIRECTIONAL)
    params = init_parameters(config, seed=1)
    rng = np.random.default_rng(2)
    patches = rng.normal(size=(1, 3, 8))
    changed = patches.copy()
    changed[0,2] += 1.0
    (_, _, a) = forward_batch(patches, params, trace=True)
    (_, _, b) = forward_batch(changed, params, trace=True)
    assert not np.allclose(a.hidden[1][0,0], b.hidden[1][0,0])


def test_zero_weight_block_is_double_layer_norm(params):
    zeroed = params.copy()
    for name in zeroed.names():
        if name.startswith("blocks.") and ".ln" not in name:
            zeroed.arrays[name][...] = 0.0
    rng = np.random.default_rng(3)
    z = rng.normal(size=(3, 8))
    ones = np.ones(8)
    zeros = np.zeros(8)
    eps = params.config.eps
    expected = layer_norm(layer_norm(z, ones, zeros, eps), ones, zeros, eps)
    assert np.allclose(transformer_block(z, zeroed, 0), expected, atol=1e-12)


def test_project_with_zero_head(params):
    p = params.copy()
    p.arrays["head.W_out"][...] = 0.0
    p.arrays["head.b_out"][...] = 0.25
    zL = np.ones((3, 8))
    assert np.allclose(project(zL, p, mu=2.0, sigma=4.0), [3.0])


def test_forward_matches_batch(params):
    rng = np.random.default_rng(4)
    windows = rng.normal(size=(5, 24))
    samples = [normalize(WindowSample(input=w, target=np.zeros(1)))
        for w in windows]
    single = np.array([forward(s, params) for s in samples])
    assert single.shape == (5, 1)
    patches = np.stack([s.input.reshape(3, 8) for s in samples])
    (out, _, _) = forward_batch(patches, params)
    mu = np.array([s.mu for s in samples])
    sigma = np.array([s.sigma for s in samples])
    assert np.allclose(single[:,0], sigma*out[:,0] + mu, atol=1e-12)


def test_forward_trace_shapes(params):
    sample = normalize(WindowSample(input=np.sin(np.arange(24.0)),
        target=np.zeros(1)))
    (pred, trace) = forward(sample, params, trace=True)
    assert len(trace.hidden) == 2 and len(trace.attention) == 1
    assert trace.hidden[0].shape == (3, 8)
    assert trace.attention[0].shape == (2, 3, 3)
    with pytest.raises(ShapeError):
        forward(WindowSample(input=np.zeros(24), target=np.zeros(1)), params)


def test_embed_shape_check(params):
    with pytest.raises(ShapeError):
        embed(np.zeros((4, 8)), params)


def test_zero_layer_model():
    config = tiny_config(L=0)
    params = init_parameters(config, seed=0)
    assert not any(n.startswith("blocks.") for n in params.names())
    (out, _, trace) = forward_batch(np.zeros((2, 3, 8)), params, trace=True)
    assert out.shape == (2, 1) and len(trace.hidden) == 1
