"""
Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""

from collections import OrderedDict
import logging

import numpy as np

from .datapipe import WindowIndex, normalize_windows, patch_windows
from .errors import ConfigError
from .evaluation import (CO_DIRECTION_THRESHOLD, alignment_terms,
    co_direction_ratio, compute_metrics, feature_stability)
from .model import FreezeMask, forward_batch, init_parameters
from .rollout import predict_dataset
from .training import (mine_hard_cases, schs_train, surrogate_pretrain,
    teaf_train, window_loss)


logger = logging.getLogger(__name__)

VARIANTS = ("full", "no_teaf", "no_schs", "no_patch")


def _count(fraction, n):
    return int(np.floor(fraction*n + 1e-9))


def split_dataset(trajs, fractions, seed=0):
    """Seeded train/val/test split; the test set takes the remainder."""
    order = np.random.default_rng([seed, 7]).permutation(len(trajs))
    n_train = _count(fractions[0], len(trajs))
    n_val = _count(fractions[1], len(trajs))
    pick = lambda idx: [trajs[i] for i in sorted(idx)]
    return (pick(order[:n_train]), pick(order[n_train:n_train+n_val]),
        pick(order[n_train+n_val:]))


def subsample(trajs, fraction, seed=0):
    """floor(fraction*N) trajectories drawn without replacement."""
    n = _count(fraction, len(trajs))
    order = np.random.default_rng([seed, 11]).permutation(len(trajs))
    return [trajs[i] for i in sorted(order[:n])]


def training_mask(params, profile="desk", freeze=True):
    """Default freeze mask, or all arrays for the encoder baseline."""
    if freeze and profile != "enc":
        return FreezeMask.default(params.names())
    return FreezeMask.all_trainable(params.names())


def transplant_blocks(src, dst):
    """Copy of dst carrying the T-block arrays of src."""
    out = dst.copy()
    for name in out.names():
        if name.startswith("blocks."):
            if name not in src.arrays or src[name].shape != out[name].shape:
                raise ConfigError("cannot transplant %s between models" %
                    name)
            out.arrays[name] = src[name].copy()
    return out


def finetune(params, mask, train, val, teaf_cfg, schs_cfg, variant="full",
    logs=(None, None)):
    """Two-stage fine-tuning, or one of its ablated variants.

    Returns:
        Tuple (params, hard cases or None).
    """
    (teaf_log, schs_log) = logs
    if variant in ("full", "no_schs", "no_patch"):
        (params, hard) = teaf_train(params, mask, train, val, teaf_cfg,
            teaf_log)
    elif variant == "no_teaf":
        hard = mine_hard_cases(params, train, teaf_cfg.K)
    else:
        raise ConfigError("unknown variant %r" % variant)
    if variant != "no_schs":
        params = schs_train(params, mask, hard.select(train), schs_cfg,
            schs_log)
    return (params, hard)


def evaluate(params, trajs, fingerprint=""):
    """Batched rollout over a test set and its MetricsReport."""
    results = predict_dataset(params, trajs)
    seconds = sum(r.seconds for r in results)
    return (compute_metrics(results, trajs, params.config.L_seq,
        fingerprint=fingerprint, seconds=seconds), results)


def _median(values):
    values = [v for v in values if v is not None]
    return float(np.median(values)) if values else float("nan")


def _hybrid(report):
    h = report["H"]
    return (h["MAE"], h["MSE"]) if h is not None else (None, None)


def run_variant(cfg, pretrained, variant, seed, train, val, test):
    """Fine-tune one ablation variant from pre-trained blocks.

    Returns:
        The test-set MetricsReport.
    """
    overrides = {"L_p": 1, "S": 1} if variant == "no_patch" else {}
    config = cfg.model_config(**overrides)
    params = transplant_blocks(pretrained, init_parameters(config, seed))
    mask = training_mask(params, cfg.profile, cfg.freeze)
    (params, hard) = finetune(params, mask, train, val,
        cfg.teaf_config(seed=seed), cfg.schs_config(seed=seed), variant)
    return evaluate(params, test)[0]


def ablate(cfg, pretrained, train, val, test):
    """Median hybrid-category metrics of every variant over cfg.seeds.

    Returns:
        List of (variant, MAE_H, MSE_H) rows in VARIANTS order.
    """
    rows = []
    for variant in VARIANTS:
        scores = [_hybrid(run_variant(cfg, pretrained, variant, seed, train,
            val, test)) for seed in cfg.seeds]
        rows.append((variant, _median([s[0] for s in scores]),
            _median([s[1] for s in scores])))
        logger.info("ablation %s: MAE_H %.4g MSE_H %.4g", *rows[-1])
    return rows


def fewshot(cfg, source, train, val, test):
    """Few-shot curve on a target system.

    For each fraction f the source model is fine-tuned on floor(f*N) target
    trajectories; f = 0 evaluates the source model as is.

    Returns:
        List of (f, MAE_H, MSE_H) rows sorted by f.
    """
    zero = _hybrid(evaluate(source, test)[0])
    rows = []
    for f in sorted(cfg.fractions):
        scores = []
        for seed in cfg.seeds:
            subset = subsample(train, f, seed)
            if not subset:
                scores.append(zero)
                continue
            mask = training_mask(source, cfg.profile, cfg.freeze)
            (params, hard) = finetune(source, mask, subset, val,
                cfg.teaf_config(seed=seed), cfg.schs_config(seed=seed))
            scores.append(_hybrid(evaluate(params, test)[0]))
        rows.append((f, _median([s[0] for s in scores]),
            _median([s[1] for s in scores])))
        logger.info("few-shot f=%.3g: MAE_H %.4g MSE_H %.4g", *rows[-1])
    return rows


def observation_windows(trajs, L_seq, limit=None):
    """The first L_seq samples of every channel, with (trajectory,
    channel) labels."""
    windows = []
    labels = []
    for traj in trajs:
        for c in range(traj.n_x):
            windows.append(traj.data[c,:L_seq])
            labels.append((traj.ident, c))
    if limit is not None:
        (windows, labels) = (windows[:limit], labels[:limit])
    return (np.array(windows), labels)


def traces(params, windows):
    """Forward traces of a stack of physical windows."""
    config = params.config
    (x, mu, sigma) = normalize_windows(windows)
    tr = forward_batch(patch_windows(x, config.patch), params, config,
        trace=True)[2]
    return [tr.sample(b) for b in range(len(windows))]


def diagnose(params, trajs, threshold=CO_DIRECTION_THRESHOLD, limit=64):
    """Representation diagnostics on observation windows.

    Returns:
        Tuple (summary, records, features): summary means, one record per
        window and final-layer feature rows (trajectory, channel, patch,
        values...).
    """
    config = params.config
    if config.L < 1:
        raise ConfigError("diagnostics need at least one T-block")
    (windows, labels) = observation_windows(trajs, config.L_seq, limit)
    if not len(windows):
        raise ConfigError("no windows to diagnose")
    records = []
    features = []
    for (tr, (ident, c)) in zip(traces(params, windows), labels):
        (sim, skipped) = feature_stability(tr)
        ratio = co_direction_ratio(tr, threshold) if config.P > 1 else None
        (self_sum, cross_sum, bound) = (0.0, 0.0, 0.0)
        for l in range(config.L):
            for A in tr.attention[l]:
                terms = alignment_terms(A, tr.hidden[l])
                self_sum += terms.self_terms.sum()
                cross_sum += terms.cross_terms.sum()
                bound += terms.bound
        n_att = float(config.L*config.h)
        records.append(OrderedDict([("trajectory", ident), ("channel", c),
            ("similarity", sim), ("skipped", skipped),
            ("co_direction", ratio), ("self_alignment", self_sum/n_att),
            ("cross_alignment", cross_sum/n_att), ("bound", bound/n_att)]))
        for (p, row) in enumerate(tr.hidden[-1]):
            features.append([ident, c, p] + row.tolist())
    summary = OrderedDict()
    for key in ("similarity", "co_direction", "self_alignment",
        "cross_alignment", "bound"):
        vals = [r[key] for r in records
            if r[key] is not None and np.isfinite(r[key])]
        summary[key] = float(np.mean(vals)) if vals else None
    summary["skipped"] = int(sum(r["skipped"] for r in records))
    summary["windows"] = len(records)
    summary["threshold"] = threshold
    summary["parameters"] = params.count()
    return (summary, records, features)


def pretrain_benefit(cfg, train, val, limit=64):
    """Pre-trained against random frozen blocks over paired seeds.

    For each seed both models share the same embedding and head
    initialization and are fine-tuned with teacher forcing under the
    default freeze mask.

    Returns:
        List of rows (seed, val_mse_pretrained, val_mse_random,
        similarity_pretrained, similarity_random).
    """
    config = cfg.model_config()
    val_index = WindowIndex([t.data for t in val], config.L_seq,
        config.L_pred)
    rows = []
    for seed in cfg.seeds:
        base = init_parameters(config, seed)
        pretrained = transplant_blocks(surrogate_pretrain(config,
            cfg.pretrain_config(), seed), base)
        mask = FreezeMask.default(base.names())
        teaf_cfg = cfg.teaf_config(seed=seed)
        row = [seed]
        sims = []
        for start in (pretrained, base):
            (params, hard) = teaf_train(start, mask, train, val, teaf_cfg)
            rows_all = np.arange(len(val_index))
            row.append(window_loss(params, val_index, rows_all))
            sims.append(diagnose(params, val, limit=limit)[0]["similarity"])
        rows.append(tuple(row + sims))
        logger.info("pre-training benefit seed %d: val MSE %.4g vs %.4g",
            seed, row[1], row[2])
    return rows
