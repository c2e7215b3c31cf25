import numpy as np
import pytest

from conftest import make_trajectories, tiny_config
from gridseq.config import ExperimentConfig
from gridseq.errors import ConfigError
from gridseq.experiments import (VARIANTS, ablate, diagnose, evaluate,
    fewshot, observation_windows, pretrain_benefit, split_dataset, subsample,
    training_mask, transplant_blocks)
from gridseq.model import init_parameters


def small_experiment(**overrides):
    kwargs = dict(L_seq=24, L_p=8, S=8, seeds=[0], fractions=[0.5, 0.0],
        model={"L": 1, "h": 2, "d": 8, "d_ff": 16},
        teaf={"epochs": 1, "batch_size": 16, "K": 2,
            "samples_per_epoch": 32, "val_samples": 16},
        schs={"E_start": 1, "E_max": 2, "track_rollout": False},
        pretrain={"epochs": 1, "batch_size": 16, "samples_per_epoch": 32,
            "val_samples": 16, "n_series": 2, "T": 60})
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs).validate()


def test_split_dataset():
    (train, val, test) = split_dataset(list(range(300)), [0.8, 0.1, 0.1],
        seed=0)
    assert (len(train), len(val), len(test)) == (240, 30, 30)
    assert sorted(train + val + test) == list(range(300))
    assert train == sorted(train)
    assert split_dataset(list(range(300)), [0.8, 0.1, 0.1], 0)[0] == train
    assert split_dataset(list(range(300)), [0.8, 0.1, 0.1], 1)[0] != train


def test_subsample():
    items = list(range(10))
    assert len(subsample(items, 0.25)) == 2
    assert subsample(items, 0.0) == []
    assert subsample(items, 1.0) == items
    assert set(subsample(items, 0.5, seed=3)) <= set(items)


def test_training_mask_and_transplant():
    params = init_parameters(tiny_config(), seed=0)
    assert training_mask(params, "desk").frozen_names()
    assert training_mask(params, "enc").frozen_names() == []
    assert training_mask(params, "desk", freeze=False).frozen_names() == []
    other = init_parameters(tiny_config(), seed=1)
    mixed = transplant_blocks(other, params)
    assert np.array_equal(mixed["blocks.0.attn.W_Q"],
        other["blocks.0.attn.W_Q"])
    assert np.array_equal(mixed["embed.W_p"], params["embed.W_p"])
    with pytest.raises(ConfigError):
        transplant_blocks(init_parameters(tiny_config(d=16), 0), params)


def test_no_patch_geometry():
    cfg = small_experiment()
    assert cfg.model_config(L_p=1, S=1).P == 24


def test_evaluate_reports_categories(params, trajectories):
    (report, results) = evaluate(params, trajectories, fingerprint="f")
    assert report["S"]["count"] == 3 and report["U"]["count"] == 3
    assert len(results) == 6 and report.fingerprint == "f"


def test_ablate_and_fewshot_rows():
    cfg = small_experiment()
    trajs = make_trajectories(8, T=40, seed=2)
    (train, val, test) = (trajs[:4], trajs[4:6], trajs[6:])
    source = init_parameters(cfg.model_config(), seed=0)
    rows = ablate(cfg, source, train, val, test)
    assert [r[0] for r in rows] == list(VARIANTS)
    assert all(np.isfinite(r[1]) and np.isfinite(r[2]) for r in rows)

    rows = fewshot(cfg, source, train, val, test)
    assert [r[0] for r in rows] == [0.0, 0.5]
    zero = evaluate(source, test)[0]["H"]
    assert rows[0][1:] == (zero["MAE"], zero["MSE"])


def test_cross_system_fewshot_uses_target_channels():
    cfg = small_experiment(fractions=[0.5])
    trajs = make_trajectories(6, n_g=3, T=40, seed=3)
    source = init_parameters(cfg.model_config(), seed=0)
    rows = fewshot(cfg, source, trajs[:4], trajs[4:5], trajs[5:])
    assert len(rows) == 1 and np.isfinite(rows[0][2])


def test_observation_windows():
    trajs = make_trajectories(2, n_g=2, T=30)
    (windows, labels) = observation_windows(trajs, 24)
    assert windows.shape == (8, 24)
    assert labels[5] == (1, 1)
    assert len(observation_windows(trajs, 24, limit=3)[1]) == 3


def test_diagnose_ranges(params, trajectories):
    (summary, records, features) = diagnose(params, trajectories, limit=5)
    assert summary["windows"] == 5 and len(records) == 5
    for r in records:
        assert -1.0 <= r["similarity"] <= 1.0
        assert 0.0 <= r["co_direction"] <= 1.0
        assert r["self_alignment"] >= 0 and r["cross_alignment"] >= 0
        assert r["bound"] >= r["self_alignment"]
    assert len(features) == 5*3 and len(features[0]) == 3 + 8
    assert summary["parameters"] == params.count()


def test_diagnose_needs_blocks(trajectories):
    params = init_parameters(tiny_config(L=0), seed=0)
    with pytest.raises(ConfigError):
        diagnose(params, trajectories)


def test_pretrain_benefit_rows():
    cfg = small_experiment()
    trajs = make_trajectories(4, T=40, seed=5)
    rows = pretrain_benefit(cfg, trajs[:3], trajs[3:], limit=4)
    assert len(rows) == 1
    (seed, val_pre, val_rand, sim_pre, sim_rand) = rows[0]
    assert seed == 0 and val_pre > 0 and val_rand > 0
    assert -1.0 <= sim_pre <= 1.0
