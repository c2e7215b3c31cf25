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

from dataclasses import asdict, dataclass, fields
import json
import logging
import time
from typing import Optional

import numpy as np

from .corpus import CorpusConfig, generate_corpus
from .datapipe import WindowIndex
from .errors import ConfigError, DivergenceError
from .model import (FreezeMask, forward_batch, init_parameters,
    loss_and_gradients, mse)
from .optim import Adam, CosineSchedule, EarlyStopping, clip_global_norm
from .rollout import (build_next_input, n_rollout_steps, predict_dataset,
    prepare_windows)


logger = logging.getLogger(__name__)


class _ConfigMixin(object):

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = set(f.name for f in fields(cls))
        unknown = set(doc) - known
        if unknown:
            raise ConfigError("unknown %s keys: %s" % (cls.__name__,
                ", ".join(sorted(unknown))))
        return cls(**doc).validate()


@dataclass
class TeaFConfig(_ConfigMixin):
    """Teacher-forcing stage settings.

    An epoch draws samples_per_epoch windows, a seeded subsample without
    replacement, rather than a full pass; None means a full pass over every
    window.
    """
    epochs: int = 6
    alpha: float = 1e-3
    batch_size: int = 64
    K: int = 30
    samples_per_epoch: Optional[int] = 8192
    val_samples: int = 4096
    patience: int = 3
    min_delta: float = 1e-6
    clip: float = 1.0
    seed: int = 0

    def validate(self):
        if self.samples_per_epoch is not None and self.samples_per_epoch < 1:
            raise ConfigError("samples_per_epoch must be positive or None")
        if min(self.epochs, self.batch_size, self.K, self.val_samples,
            self.patience) < 1 or not self.alpha > 0:
            raise ConfigError("TeaF settings must all be positive")
        return self


@dataclass
class SchSConfig(_ConfigMixin):
    """Scheduled-sampling stage settings."""
    E_start: int = 2
    E_max: int = 6
    alpha: float = 5e-4
    clip: float = 1.0
    seed: int = 0
    track_rollout: bool = True

    def validate(self):
        if not 0 <= self.E_start < self.E_max:
            raise ConfigError("scheduled sampling needs 0 <= E_start < E_max"
                " (E_start=%d, E_max=%d)" % (self.E_start, self.E_max))
        if not self.alpha > 0:
            raise ConfigError("learning rate must be positive")
        return self


@dataclass
class PretrainConfig(_ConfigMixin):
    """Surrogate pre-training settings."""
    epochs: int = 6
    alpha: float = 1e-3
    batch_size: int = 64
    samples_per_epoch: int = 8192
    val_samples: int = 4096
    n_series: int = 256
    T: int = 501
    patience: int = 3
    min_delta: float = 1e-6
    clip: float = 1.0

    def validate(self):
        if min(self.epochs, self.batch_size, self.samples_per_epoch,
            self.val_samples, self.n_series) < 1 or not self.alpha > 0:
            raise ConfigError("pre-training settings must all be positive")
        return self

    @property
    def corpus(self):
        return CorpusConfig(n_series=self.n_series, T=self.T)


class HardCaseSet(object):
    """The K trajectories with the largest rollout error.

    Constructor args:
        entries: List of (ident, mse) pairs sorted by descending mse.
    """

    def __init__(self, entries):
        self.entries = list(entries)

    @property
    def ids(self):
        return [i for (i, e) in self.entries]

    def __len__(self):
        return len(self.entries)

    def select(self, trajs):
        """The member trajectories of a dataset, in hard-case order."""
        by_id = dict((t.ident, t) for t in trajs)
        missing = [i for i in self.ids if i not in by_id]
        if missing:
            raise ConfigError("hard cases %s are not in the dataset" % (
                missing[:5],))
        return [by_id[i] for i in self.ids]

    def to_dict(self):
        return {"ids": self.ids, "mse": [e for (i, e) in self.entries]}

    @classmethod
    def from_dict(cls, doc):
        return cls(zip(doc["ids"], doc["mse"]))


class TrainingLog(object):
    """Per-epoch records, optionally appended to a JSON-lines file.

    Each line is flushed as soon as it is written, so a log of a failed run
    keeps every completed epoch.
    """

    def __init__(self, path=None):
        self.path = path
        self.records = []
        if path is not None:
            open(path, 'w').close()

    def write(self, stage, epoch, epsilon, train_loss, val_loss, lr,
        wall_seconds):
        rec = {"stage": stage, "epoch": epoch, "epsilon": epsilon,
            "train_loss": train_loss, "val_loss": val_loss, "lr": lr,
            "wall_seconds": wall_seconds}
        self.records.append(rec)
        logger.info("%s epoch %d: train %.6g val %s lr %.3g", stage, epoch,
            train_loss, "-" if val_loss is None else "%.6g" % val_loss, lr)
        if self.path is not None:
            with open(self.path, 'a') as f:
                f.write(json.dumps(rec, sort_keys=True) + "\n")


def teaf_loss(pred, target):
    """Mean squared error between prediction and target."""
    return mse(pred, target)


def sampling_rate(k, E_start, E_max):
    """Probability of feeding ground truth in epoch k (1-based).

    1 before E_start, then a linear decay reaching 0 at E_max.
    """
    if E_max == E_start:
        raise ConfigError("sampling schedule needs E_max != E_start")
    if k < E_start:
        return 1.0
    return 1.0 - (k - E_start) / float(E_max - E_start)


def mix_segment(truth, pred, epsilon, rng):
    """Choose a whole segment: ground truth with probability epsilon.

    Returns:
        Tuple (segment, from_truth).
    """
    from_truth = bool(rng.random() < epsilon)
    return (np.asarray(truth if from_truth else pred), from_truth)


def _normalized_batch(index, rows, config):
    (x, y) = index.gather(rows)
    (patches, mu, sigma) = prepare_windows(x, config)
    return (patches, (y - mu)/sigma)


def _check_loss(loss, stage, epoch, step):
    if not np.isfinite(loss):
        raise DivergenceError("%s loss is %r at epoch %d, step %d" % (stage,
            loss, epoch, step), stage=stage, epoch=epoch, step=step)


def window_loss(params, index, rows, config=None, batch_size=1024):
    """Mean normalized-space loss over selected windows."""
    config = params.config if config is None else config
    (outs, targets) = ([], [])
    for lo in range(0, len(rows), batch_size):
        (patches, y) = _normalized_batch(index, rows[lo:lo+batch_size],
            config)
        outs.append(forward_batch(patches, params, config)[0])
        targets.append(y)
    return teaf_loss(np.concatenate(outs), np.concatenate(targets))


def fit_windows(params, mask, train_index, val_index, stage, epochs, alpha,
    batch_size, samples_per_epoch, val_samples, seed, clip=1.0,
    patience=3, min_delta=1e-6, log=None):
    """Teacher-forced mini-batch training on gathered windows.

    Each epoch draws samples_per_epoch windows without replacement (all
    windows if fewer or None) in a seeded order. The best parameters by
    validation loss are restored at the end.

    Returns:
        The trained ModelParameters (a copy of params).
    """
    config = params.config
    params = params.copy()
    if len(train_index) == 0:
        raise ConfigError("%s: no training windows" % stage)
    trainable = mask.trainable_names()
    adam = Adam(params, mask, lr=alpha)
    schedule = CosineSchedule(alpha, epochs)
    stopper = EarlyStopping(patience, min_delta)
    val_rng = np.random.default_rng([seed, 0, 1])
    val_rows = (val_rng.permutation(len(val_index))[:val_samples]
        if val_index is not None and len(val_index) else None)
    best = params.copy()
    n_clipped = 0
    for epoch in range(1, epochs+1):
        tic = time.perf_counter()
        lr = schedule.lr(epoch)
        rng = np.random.default_rng([seed, epoch])
        order = rng.permutation(len(train_index))[:samples_per_epoch]
        losses = []
        for (k, lo) in enumerate(range(0, len(order), batch_size)):
            (patches, y) = _normalized_batch(train_index,
                order[lo:lo+batch_size], config)
            (loss, grads) = loss_and_gradients(params, patches, y, config,
                trainable)
            _check_loss(loss, stage, epoch, k)
            (grads, norm, clipped) = clip_global_norm(grads, clip)
            if clipped:
                n_clipped += 1
                logger.debug("%s epoch %d step %d: gradient norm %.3g "
                    "clipped", stage, epoch, k, norm)
            adam.step(grads, lr)
            losses.append(loss)
        train_loss = float(np.mean(losses))
        val_loss = None
        if val_rows is not None:
            val_loss = window_loss(params, val_index, val_rows, config)
            _check_loss(val_loss, stage, epoch, len(losses))
        if log is not None:
            log.write(stage, epoch, None, train_loss, val_loss, lr,
                time.perf_counter()-tic)
        (improved, stop) = stopper.update(
            train_loss if val_loss is None else val_loss, epoch)
        if improved:
            best = params.copy()
        if stop:
            logger.info("%s: early stop after epoch %d (best epoch %d)",
                stage, epoch, stopper.best_epoch)
            break
    if n_clipped:
        logger.warning("%s: gradient norm clipped on %d steps", stage,
            n_clipped)
    return best


def mine_hard_cases(params, trajs, K, config=None):
    """Top-K trajectories by physical-unit rollout MSE.

    Ties keep dataset order. Trajectories whose channels all diverge are
    scored on their held predictions.
    """
    config = params.config if config is None else config
    results = predict_dataset(params, trajs, config, strict=False)
    scores = []
    for (traj, res) in zip(trajs, results):
        err = float(np.mean((res.predictions -
            traj.data[:,config.L_seq:])**2))
        scores.append((traj.ident, err if np.isfinite(err) else np.inf))
    order = sorted(range(len(scores)), key=lambda i: -scores[i][1])
    return HardCaseSet([scores[i] for i in order[:K]])


def teaf_train(params, mask, D_train, D_val, cfg, log=None):
    """Teacher-forcing fine-tuning followed by hard-case mining.

    Args:
        params: Initial ModelParameters (not modified).
        mask: FreezeMask; frozen arrays are never updated.
        D_train, D_val: Lists of Trajectory.
        cfg: TeaFConfig.
        log: Optional TrainingLog.

    Returns:
        Tuple (trained params, HardCaseSet).

    Raises:
        DivergenceError: If a loss becomes non-finite.
    """
    cfg.validate()
    if not D_train:
        raise ConfigError("TeaF needs a nonempty training set")
    config = params.config
    train_index = WindowIndex([t.data for t in D_train], config.L_seq,
        config.L_pred)
    val_index = (WindowIndex([t.data for t in D_val], config.L_seq,
        config.L_pred) if D_val else None)
    trained = fit_windows(params, mask, train_index, val_index, "teaf",
        cfg.epochs, cfg.alpha, cfg.batch_size, cfg.samples_per_epoch,
        cfg.val_samples, cfg.seed, cfg.clip, cfg.patience, cfg.min_delta,
        log)
    hard = mine_hard_cases(trained, D_train, cfg.K, config)
    logger.info("teaf: %d hard cases, worst rollout MSE %.4g", len(hard),
        hard.entries[0][1] if len(hard) else float("nan"))
    return (trained, hard)


def scheduled_rollout(params, truth, epsilon, rng, config=None,
    visit=None):
    """Walk a trajectory with scheduled sampling.

    Starting from the true first window, every step forwards all channels,
    then per channel picks the true or the predicted segment (one draw per
    channel and segment) to build the next window.

    Args:
        params: ModelParameters.
        truth: (n_x, T) true samples.
        epsilon: Probability of choosing the true segment.
        rng: numpy Generator for the draws.
        visit: Optional callable visit(j, patches, target_norm, n_valid)
            called on every step before the window is advanced; its return
            value (e.g. a loss) is collected.

    Returns:
        Tuple (predictions, windows, collected): the (n_x, T - L_seq)
        physical predictions, the list of input windows visited and the
        list of visit() results.
    """
    config = params.config if config is None else config
    (L_seq, L_pred) = (config.L_seq, config.L_pred)
    truth = np.asarray(truth, dtype=np.float64)
    (n_x, T) = truth.shape
    n_pred = T - L_seq
    window = truth[:,:L_seq].copy()
    preds = np.empty((n_x, n_pred))
    windows = []
    collected = []
    for j in range(n_rollout_steps(T, L_seq, L_pred)):
        windows.append(window)
        lo = j*L_pred
        n_valid = min(L_pred, n_pred-lo)
        seg = truth[:,L_seq+lo:L_seq+lo+n_valid]
        (patches, mu, sigma) = prepare_windows(window, config)
        if visit is not None:
            collected.append(visit(j, patches, (seg - mu)/sigma, n_valid))
        out = forward_batch(patches, params, config)[0]
        pred = sigma*out + mu
        preds[:,lo:lo+n_valid] = pred[:,:n_valid]
        if n_valid < L_pred:
            break
        mixed = np.array([mix_segment(seg[c], pred[c], epsilon, rng)[0]
            for c in range(n_x)])
        window = build_next_input(window, mixed)
    return (preds, windows, collected)


def rollout_mse(params, trajs, config=None):
    """Mean physical-unit rollout MSE over trajectories."""
    config = params.config if config is None else config
    results = predict_dataset(params, trajs, config, strict=False)
    return float(np.mean([np.mean((r.predictions -
        t.data[:,config.L_seq:])**2) for (r, t) in zip(results, trajs)]))


def schs_train(params, mask, D_hard, cfg, log=None):
    """Scheduled-sampling fine-tuning on the hard cases.

    In epoch k the true segment is fed with probability
    sampling_rate(k, E_start, E_max). Each trajectory contributes the mean
    of its per-step normalized losses; predictions fed back are constants
    for differentiation. One Adam step is taken per trajectory. Hard cases
    no longer than the observation window have no step to train on and are
    skipped.

    Returns:
        The fine-tuned ModelParameters (a copy of params).

    Raises:
        ConfigError: If no hard case is longer than the window.
        DivergenceError: If a loss becomes non-finite.
    """
    cfg.validate()
    if not D_hard:
        raise ConfigError("scheduled sampling needs a nonempty hard set")
    config = params.config
    short = [t.ident for t in D_hard if t.T <= config.L_seq]
    if short:
        logger.warning("schs: skipping %d hard case(s) no longer than the "
            "window: %s", len(short), short[:5])
        D_hard = [t for t in D_hard if t.T > config.L_seq]
    if not D_hard:
        raise ConfigError("scheduled sampling needs a hard case longer "
            "than the %d-sample window" % config.L_seq)
    params = params.copy()
    trainable = mask.trainable_names()
    adam = Adam(params, mask, lr=cfg.alpha)
    schedule = CosineSchedule(cfg.alpha, cfg.E_max)
    n_clipped = 0
    for epoch in range(1, cfg.E_max+1):
        tic = time.perf_counter()
        eps = sampling_rate(epoch, cfg.E_start, cfg.E_max)
        lr = schedule.lr(epoch)
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(D_hard))
        losses = []
        for i in order:
            traj = D_hard[i]
            acc = {}

            def visit(j, patches, target, n_valid):
                (loss, g) = loss_and_gradients(params, patches, target,
                    config, trainable, n_valid=n_valid)
                for (name, value) in g.items():
                    acc[name] = acc[name] + value if name in acc else value
                return loss

            step_losses = scheduled_rollout(params, traj.data, eps, rng,
                config, visit)[2]
            n = float(len(step_losses))
            loss = sum(step_losses) / n
            _check_loss(loss, "schs", epoch, traj.ident)
            grads = dict((name, acc[name]/n) for name in trainable)
            (grads, norm, clipped) = clip_global_norm(grads, cfg.clip)
            n_clipped += clipped
            adam.step(grads, lr)
            losses.append(loss)
        val = rollout_mse(params, D_hard, config) if cfg.track_rollout \
            else None
        if log is not None:
            log.write("schs", epoch, eps, float(np.mean(losses)), val, lr,
                time.perf_counter()-tic)
    if n_clipped:
        logger.warning("schs: gradient norm clipped on %d steps", n_clipped)
    return params


def surrogate_pretrain(config, cfg=None, seed=0, log=None):
    """Pre-train every array on the synthetic corpus.

    Training and held-out windows come from corpora with different seeds.

    Returns:
        ModelParameters to be frozen downstream.
    """
    cfg = PretrainConfig() if cfg is None else cfg
    cfg.validate()
    params = init_parameters(config, seed)
    mask = FreezeMask.all_trainable(params.names())
    train = generate_corpus(cfg.corpus, seed=2*seed)
    held_out = generate_corpus(cfg.corpus, seed=2*seed+1)
    train_index = WindowIndex([train], config.L_seq, config.L_pred)
    val_index = WindowIndex([held_out], config.L_seq, config.L_pred)
    return fit_windows(params, mask, train_index, val_index, "pretrain",
        cfg.epochs, cfg.alpha, cfg.batch_size, cfg.samples_per_epoch,
        cfg.val_samples, seed, cfg.clip, cfg.patience, cfg.min_delta, log)
