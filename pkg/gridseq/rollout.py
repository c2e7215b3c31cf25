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

from dataclasses import dataclass, field
import logging
import time

import numpy as np

from .datapipe import normalize_windows, patch_windows
from .errors import RolloutError, ShapeError
from .model import forward_batch
from .simulator import Trajectory, classify_stability


logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


@dataclass
class ObservationWindow:
    """The first L_seq samples of every channel."""
    values: np.ndarray
    t0: float = 0.0

    @property
    def n_x(self):
        return self.values.shape[0]

    @classmethod
    def from_trajectory(cls, traj, L_seq):
        if traj.T < L_seq:
            raise ShapeError("trajectory has %d samples, window needs %d" % (
                traj.T, L_seq))
        return cls(values=traj.data[:,:L_seq].copy(), t0=0.0)


@dataclass
class RolloutResult:
    """Predicted continuation of every channel.

    predictions is (n_x, T - L_seq); divergent channels hold their last
    finite value from diverged_at onwards.
    """
    predictions: np.ndarray
    divergent: np.ndarray
    diverged_at: np.ndarray
    step_seconds: list = field(default_factory=list)

    @property
    def n_steps(self):
        return len(self.step_seconds)

    @property
    def seconds(self):
        return float(sum(self.step_seconds))


def n_rollout_steps(T, L_seq, L_pred):
    """Steps needed to cover T - L_seq samples; the last may be partial."""
    return -(-(T - L_seq) // L_pred)


def prepare_windows(windows, config):
    """Normalize and patch physical windows (n, L_seq).

    Returns:
        Tuple (patches, mu, sigma).
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2 or windows.shape[1] != config.L_seq:
        raise ShapeError("windows have shape %s, expected (n, %d)" % (
            windows.shape, config.L_seq))
    (x, mu, sigma) = normalize_windows(windows)
    return (patch_windows(x, config.patch), mu, sigma)


def build_next_input(prev, mixed):
    """Drop the oldest L_pred samples of each window and append mixed.

    Works on a single window (L_seq,) or a stack (n, L_seq).
    """
    prev = np.asarray(prev)
    mixed = np.asarray(mixed)
    L_pred = mixed.shape[-1]
    if L_pred > prev.shape[-1]:
        raise ShapeError("segment of %d samples exceeds window of %d" % (
            L_pred, prev.shape[-1]))
    return np.concatenate((prev[...,L_pred:], mixed), axis=-1)


def step(params, windows, config=None):
    """One prediction per channel window.

    Each row is normalized, patched, forwarded and denormalized on its own;
    the batch only groups the work.

    Args:
        params: ModelParameters.
        windows: (n, L_seq) physical windows.

    Returns:
        Tuple (pred, bad): the (n, L_pred) physical predictions and the
        boolean flags of rows that are non-finite or exceed the divergence
        limit.
    """
    config = params.config if config is None else config
    (patches, mu, sigma) = prepare_windows(windows, config)
    out = forward_batch(patches, params, config)[0]
    with np.errstate(over='ignore', invalid='ignore'):
        pred = sigma*out + mu
        bad = ~(np.isfinite(pred).all(axis=1) &
            (abs(pred) <= DIVERGENCE_LIMIT).all(axis=1))
    return (pred, bad)


def rollout_windows(params, windows, n_pred, config=None):
    """Autoregressive generation for a stack of channel windows.

    Returns:
        RolloutResult over the rows of windows.
    """
    config = params.config if config is None else config
    L_pred = config.L_pred
    window = np.array(windows, dtype=np.float64)
    n = window.shape[0]
    preds = np.empty((n, n_pred))
    divergent = np.zeros(n, dtype=bool)
    diverged_at = np.full(n, -1)
    seconds = []
    for j in range(n_rollout_steps(config.L_seq + n_pred, config.L_seq,
        L_pred)):
        tic = time.perf_counter()
        (pred, bad) = step(params, window, config)
        new = bad & ~divergent
        if new.any():
            logger.warning("%d channel(s) diverged at rollout step %d",
                new.sum(), j)
            diverged_at[new] = j
            divergent |= new
        if divergent.any():
            pred[divergent] = window[divergent,-1:]
        seconds.append(time.perf_counter() - tic)
        lo = j*L_pred
        hi = min(lo+L_pred, n_pred)
        preds[:,lo:hi] = pred[:,:hi-lo]
        window = build_next_input(window, pred)
    return RolloutResult(predictions=preds, divergent=divergent,
        diverged_at=diverged_at, step_seconds=seconds)


def _check_divergence(result, rows=None):
    divergent = result.divergent if rows is None else result.divergent[rows]
    if len(divergent) and divergent.all():
        at = result.diverged_at if rows is None else result.diverged_at[rows]
        last = int(at.max()) - 1
        raise RolloutError("every channel diverged (last valid step %d)" %
            last, last_valid_step=last)


def iterative_predict(params, window, T, config=None):
    """Roll a model forward from an observation window to horizon T.

    Args:
        params: ModelParameters.
        window: ObservationWindow (or an (n_x, L_seq) array).
        T: Total trajectory length including the window.

    Raises:
        RolloutError: If every channel diverges.
    """
    config = params.config if config is None else config
    values = getattr(window, "values", window)
    if T <= config.L_seq:
        raise ShapeError("horizon %d must exceed the window length %d" % (
            T, config.L_seq))
    result = rollout_windows(params, values, T - config.L_seq, config)
    _check_divergence(result)
    return result


def predict_dataset(params, trajs, config=None, strict=True):
    """Iterative prediction for many trajectories in one batch.

    Every channel of every trajectory with the same length is stacked into
    a single batch; the result for each trajectory equals that of
    iterative_predict on it alone.

    Args:
        strict: Raise RolloutError for a trajectory whose channels all
            diverge; otherwise return its held predictions.

    Returns:
        List of RolloutResult in the order of trajs.
    """
    config = params.config if config is None else config
    results = [None]*len(trajs)
    by_length = {}
    for (i, traj) in enumerate(trajs):
        by_length.setdefault(traj.T, []).append(i)
    for (T, members) in sorted(by_length.items()):
        windows = np.concatenate([trajs[i].data[:,:config.L_seq]
            for i in members])
        batch = iterative_predict_rows(params, windows, T, config)
        start = 0
        for i in members:
            rows = slice(start, start+trajs[i].n_x)
            start += trajs[i].n_x
            if strict:
                _check_divergence(batch, rows)
            share = trajs[i].n_x / float(len(windows))
            results[i] = RolloutResult(
                predictions=batch.predictions[rows],
                divergent=batch.divergent[rows],
                diverged_at=batch.diverged_at[rows],
                step_seconds=[s*share for s in batch.step_seconds])
    return results


def iterative_predict_rows(params, windows, T, config):
    if T <= config.L_seq:
        raise ShapeError("horizon %d must exceed the window length %d" % (
            T, config.L_seq))
    return rollout_windows(params, windows, T - config.L_seq, config)


def as_trajectory(result, truth, L_seq):
    """Predicted trajectory: the observation window followed by the
    forecast, marked as forecaster output and labelled from its own
    angles."""
    data = np.concatenate((truth.data[:,:L_seq], result.predictions), axis=1)
    traj = Trajectory(data, truth.dt, ident=truth.ident,
        inertia=truth.inertia, predicted=True)
    if np.isfinite(data).all():
        (traj.label, traj.oos) = classify_stability(traj)
    return traj
