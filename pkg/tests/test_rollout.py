import numpy as np
import pytest

from conftest import make_trajectories, tiny_config
from gridseq.errors import RolloutError, ShapeError
from gridseq.model import init_parameters
from gridseq.rollout import (DIVERGENCE_LIMIT, ObservationWindow,
    as_trajectory, build_next_input, iterative_predict, n_rollout_steps,
    predict_dataset, rollout_windows, step)
from gridseq.simulator import STABLE


def copy_last_model():
    """Embedding is the identity and the head reads the newest sample."""
    config = tiny_config(L=0, h=1)
    params = init_parameters(config)
    for name in params.names():
        params.arrays[name][...] = 0.0
    params.arrays["embed.W_p"][...] = np.eye(8)
    params.arrays["head.W_out"][23,0] = 1.0
    return params


def ordered_params(**overrides):
    config = tiny_config(reduction="ordered", **overrides)
    return init_parameters(config, seed=7)


def test_build_next_input():
    out = build_next_input(np.arange(5.0), np.array([9.0, 8.0]))
    assert np.array_equal(out, [2.0, 3.0, 4.0, 9.0, 8.0])
    stacked = build_next_input(np.zeros((3, 4)), np.ones((3, 1)))
    assert stacked.shape == (3, 4) and (stacked[:,-1] == 1).all()
    with pytest.raises(ShapeError):
        build_next_input(np.zeros(2), np.zeros(3))


def test_n_rollout_steps():
    assert n_rollout_steps(500, 65, 1) == 435
    assert n_rollout_steps(29, 24, 2) == 3
    assert n_rollout_steps(28, 24, 2) == 2


def test_copy_last_model_holds_value():
    params = copy_last_model()
    (traj,) = make_trajectories(1, n_g=1, T=40)
    result = iterative_predict(params, ObservationWindow.from_trajectory(traj,
        24), 40)
    assert result.predictions.shape == (2, 16)
    expected = traj.data[:,23:24]
    assert np.allclose(result.predictions, expected, rtol=0, atol=1e-9)
    assert result.n_steps == 16 and not result.divergent.any()


def test_exploding_model_raises():
    params = copy_last_model()
    params.arrays["head.b_out"][...] = 1e12
    (traj,) = make_trajectories(1, n_g=1, T=40)
    (pred, bad) = step(params, traj.data[:,:24])
    assert bad.all() and (abs(pred) > DIVERGENCE_LIMIT).all()
    with pytest.raises(RolloutError) as info:
        iterative_predict(params, traj.data[:,:24], 40)
    assert info.value.last_valid_step == -1
    held = predict_dataset(params, [traj], strict=False)[0]
    assert held.divergent.all()
    assert np.array_equal(held.predictions[:,-1], traj.data[:,23])


def test_batched_equals_sequential():
    params = ordered_params()
    trajs = make_trajectories(5, n_g=2, T=40, seed=4)
    batched = predict_dataset(params, trajs)
    for (traj, result) in zip(trajs, batched):
        alone = iterative_predict(params, traj.data[:,:24], traj.T)
        assert np.array_equal(result.predictions, alone.predictions)


def test_channels_do_not_interact():
    params = ordered_params()
    (traj,) = make_trajectories(1, n_g=2, T=40, seed=5)
    windows = traj.data[:,:24].copy()
    a = rollout_windows(params, windows, 10)
    windows[3] += 5.0
    b = rollout_windows(params, windows, 10)
    assert np.array_equal(a.predictions[:3], b.predictions[:3])
    assert not np.array_equal(a.predictions[3], b.predictions[3])


def test_partial_final_segment():
    params = ordered_params(L_pred=2)
    (traj,) = make_trajectories(1, n_g=1, T=29, seed=6)
    result = iterative_predict(params, traj.data[:,:24], 29)
    assert result.predictions.shape == (2, 5)
    assert result.n_steps == 3
    (first, bad) = step(params, traj.data[:,:24])
    assert np.array_equal(result.predictions[:,:2], first)


def test_horizon_must_exceed_window():
    params = ordered_params()
    with pytest.raises(ShapeError):
        iterative_predict(params, np.zeros((2, 24)), 24)
    with pytest.raises(ShapeError):
        step(params, np.zeros((2, 20)))


def test_as_trajectory_keeps_window_and_relabels():
    params = copy_last_model()
    (traj,) = make_trajectories(1, n_g=1, T=40)
    result = predict_dataset(params, [traj])[0]
    pred = as_trajectory(result, traj, 24)
    assert pred.predicted and pred.T == 40
    assert np.array_equal(pred.data[:,:24], traj.data[:,:24])
    assert pred.label == STABLE


def _random_windows(n, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(24)
    return (rng.normal(size=(n, 1)) + rng.uniform(0.1, 2.0, (n, 1)) *
        np.sin(rng.uniform(0.1, 0.8, (n, 1))*t + rng.uniform(0, 6, (n, 1))))


def test_step_batched_equals_single_windows():
    params = ordered_params()
    windows = _random_windows(20, seed=8)
    (pred, bad) = step(params, windows)
    for i in range(20):
        (alone, alone_bad) = step(params, windows[i:i+1])
        assert np.array_equal(pred[i], alone[0])
        assert bad[i] == alone_bad[0]


def test_step_follows_channel_permutation():
    params = ordered_params()
    windows = _random_windows(6, seed=9)
    perm = np.random.default_rng(10).permutation(6)
    (pred, _) = step(params, windows)
    (permuted, _) = step(params, windows[perm])
    assert np.array_equal(permuted, pred[perm])


def test_step_duplicated_channels_agree():
    params = ordered_params()
    windows = _random_windows(3, seed=11)
    (pred, _) = step(params, np.vstack((windows, windows[:1], windows[:1])))
    assert np.array_equal(pred[3], pred[0])
    assert np.array_equal(pred[4], pred[0])
