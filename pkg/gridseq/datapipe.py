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

from dataclasses import dataclass
import logging

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import DTYPE, row_sum


logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8


@dataclass
class ChannelSeries:
    """One univariate channel of a trajectory."""
    values: np.ndarray
    channel: int
    source: int = 0

    @property
    def T(self):
        return len(self.values)


@dataclass
class WindowSample:
    """An input/target window cut from a channel.

    mu and sigma are None until the sample is normalized.
    """
    input: np.ndarray
    target: np.ndarray
    mu: float = None
    sigma: float = None
    origin: tuple = (0, 0, 0)

    @property
    def normalized(self):
        return self.mu is not None


@dataclass
class PatchConfig:
    """Temporal patch geometry: patch length L_p and stride S."""
    L_p: int = 16
    S: int = 8

    def validate(self, L_seq):
        if not 1 <= self.S <= self.L_p:
            raise ConfigError("patch stride must satisfy 1 <= S <= L_p "
                "(S=%d, L_p=%d)" % (self.S, self.L_p))
        if self.L_p > L_seq:
            raise ConfigError("patch length %d exceeds window length %d" % (
                self.L_p, L_seq))

    def n_patches(self, L_seq):
        """P = floor((L_seq - L_p)/S) + 1."""
        self.validate(L_seq)
        return (L_seq - self.L_p) // self.S + 1


@dataclass
class PatchedSample:
    patches: np.ndarray
    mu: float
    sigma: float


def decompose_channels(traj):
    """Split a trajectory into its n_x channels, angles first."""
    return [ChannelSeries(values=traj.data[c].copy(), channel=c,
        source=traj.ident) for c in range(traj.n_x)]


def reassemble(series):
    """Stack channel series back into an (n_x, T) array."""
    ordered = sorted(series, key=lambda s: s.channel)
    return np.stack([s.values for s in ordered])


def segment(series, L_seq, L_pred):
    """Unit-stride sliding windows over a channel.

    Args:
        series: A ChannelSeries.
        L_seq: Input window length.
        L_pred: Target length.

    Returns:
        List of T - L_seq - L_pred + 1 un-normalized WindowSamples; empty
        (with a warning) if the series is too short.
    """
    n = series.T - L_seq - L_pred + 1
    if n < 1:
        logger.warning("channel %d of trajectory %s has %d samples, need %d;"
            " no windows produced", series.channel, series.source, series.T,
            L_seq + L_pred)
        return []
    v = series.values
    return [WindowSample(input=v[s:s+L_seq].copy(),
        target=v[s+L_seq:s+L_seq+L_pred].copy(),
        origin=(series.source, series.channel, s)) for s in range(n)]


def window_statistics(x):
    """Mean and floored population standard deviation over the last axis.

    Row sums are accumulated left to right so that a window gives the same
    statistics alone or inside a batch.

    Returns:
        Tuple (mu, sigma), each shaped x.shape[:-1] + (1,).
    """
    x = np.asarray(x, dtype=DTYPE)
    n = x.shape[-1]
    mu = row_sum(x, ordered=True) / n
    centered = x - mu
    sigma = np.sqrt(row_sum(centered*centered, ordered=True) / n)
    return (mu, np.maximum(sigma, SIGMA_FLOOR))


def normalize_windows(x):
    """Standardize a stack of windows by their own statistics.

    Returns:
        Tuple (normalized, mu, sigma).
    """
    (mu, sigma) = window_statistics(x)
    return ((np.asarray(x, dtype=DTYPE) - mu) / sigma, mu, sigma)


def normalize(sample):
    """Sample-wise normalization of the input portion of a window.

    The target is left in physical units.
    """
    (x, mu, sigma) = normalize_windows(sample.input[None,:])
    return WindowSample(input=x[0], target=sample.target,
        mu=float(mu[0,0]), sigma=float(sigma[0,0]), origin=sample.origin)


def denormalize(pred, mu, sigma):
    """Map a normalized prediction back to physical units."""
    return sigma*np.asarray(pred, dtype=DTYPE) + mu


def patch_windows(x, cfg):
    """Cut a stack of windows (..., L_seq) into (..., P, L_p) patches."""
    x = np.asarray(x, dtype=DTYPE)
    P = cfg.n_patches(x.shape[-1])
    idx = cfg.S*np.arange(P)[:,None] + np.arange(cfg.L_p)[None,:]
    return x[...,idx]


def patchify(sample, cfg):
    """Patch matrix of a normalized window.

    Patch p covers input[p*S : p*S+L_p]; samples after the last full patch
    are dropped.
    """
    if not sample.normalized:
        raise ShapeError("patchify expects a normalized sample")
    return PatchedSample(patches=patch_windows(sample.input, cfg),
        mu=sample.mu, sigma=sample.sigma)


class WindowIndex(object):
    """Table of (series block, channel, start) triples over a dataset.

    Windows are gathered from the stored arrays on demand instead of
    materializing every WindowSample.

    Constructor args:
        blocks: List of (n_channels, T) arrays, e.g. trajectory data.
        L_seq: Input window length.
        L_pred: Target length.
    """

    def __init__(self, blocks, L_seq, L_pred):
        self.blocks = [np.asarray(b, dtype=DTYPE) for b in blocks]
        self.L_seq = L_seq
        self.L_pred = L_pred
        rows = []
        for (i, block) in enumerate(self.blocks):
            (n_ch, T) = block.shape
            n = T - L_seq - L_pred + 1
            if n < 1:
                logger.warning("series block %d has %d samples, need %d; "
                    "skipped", i, T, L_seq + L_pred)
                continue
            starts = np.arange(n)
            for c in range(n_ch):
                rows.append(np.stack((np.full(n, i), np.full(n, c), starts),
                    axis=1))
        self.table = (np.concatenate(rows) if rows
            else np.zeros((0,3), dtype=int))

    def __len__(self):
        return len(self.table)

    def gather(self, rows):
        """Inputs (n, L_seq) and targets (n, L_pred) for table rows."""
        sel = self.table[rows]
        x = np.empty((len(sel), self.L_seq))
        y = np.empty((len(sel), self.L_pred))
        for (k, (i, c, s)) in enumerate(sel):
            v = self.blocks[i][c]
            x[k] = v[s:s+self.L_seq]
            y[k] = v[s+self.L_seq:s+self.L_seq+self.L_pred]
        return (x, y)
