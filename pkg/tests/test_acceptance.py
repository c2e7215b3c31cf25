"""Directional checks on the desk experiment; run with -m slow."""
import numpy as np
import pytest

from gridseq.config import ExperimentConfig
from gridseq.experiments import (ablate, fewshot, finetune, pretrain_benefit,
    split_dataset, training_mask)
from gridseq.model import FreezeMask
from gridseq.powersystem import load_system_spec
from gridseq.simulator import generate_dataset
from gridseq.training import surrogate_pretrain


pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk():
    cfg = ExperimentConfig().validate()
    trajs = generate_dataset(load_system_spec(cfg.system), 300, [0, 0])
    (train, val, test) = split_dataset(trajs, cfg.split, 0)
    pretrained = surrogate_pretrain(cfg.model_config(), cfg.pretrain_config(),
        seed=0)
    return (cfg, pretrained, train, val, test)


def test_ablation_ordering(desk):
    (cfg, pretrained, train, val, test) = desk
    rows = dict((r[0], r[2]) for r in ablate(cfg, pretrained, train, val,
        test))
    assert rows["full"] < rows["no_schs"]
    assert rows["no_teaf"] == max(rows.values())


def test_pretraining_beats_random_blocks(desk):
    (cfg, pretrained, train, val, test) = desk
    rows = pretrain_benefit(cfg, train, val)
    assert np.median([r[1] for r in rows]) < np.median([r[2] for r in rows])
    assert np.mean([r[3] for r in rows]) > np.mean([r[4] for r in rows])


def test_frozen_arrays_after_long_finetuning(desk):
    (cfg, pretrained, train, val, test) = desk
    mask = FreezeMask.default(pretrained.names())
    teaf = cfg.teaf_config(epochs=1, samples_per_epoch=100*64)
    (params, hard) = finetune(pretrained, mask, train, val, teaf,
        cfg.schs_config(E_start=1, E_max=2))
    for name in mask.frozen_names():
        assert np.array_equal(params[name], pretrained[name])
    assert pretrained.trainable_fraction(mask) < 0.02


def test_fewshot_curve_is_monotone(desk):
    (cfg, pretrained, train, val, test) = desk
    mask = training_mask(pretrained, cfg.profile)
    (source, hard) = finetune(pretrained, mask, train, val,
        cfg.teaf_config(), cfg.schs_config())
    target = generate_dataset(load_system_spec(cfg.target_system), 300,
        [0, 2])
    (t_train, t_val, t_test) = split_dataset(target, cfg.split, 0)
    rows = fewshot(cfg, source, t_train, t_val, t_test)
    assert [r[0] for r in rows] == [0.0, 0.05, 0.25, 1.0]
    mse = [r[2] for r in rows]
    assert all(np.isfinite(mse))
    assert all(a >= b for (a, b) in zip(mse[:-1], mse[1:]))
