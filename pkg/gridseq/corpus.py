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

from .errors import ConfigError


logger = logging.getLogger(__name__)

FAMILIES = ("sinusoid", "ramp", "chirp", "switched_ar")


@dataclass
class CorpusConfig:
    """Size and time grid of the synthetic pre-training corpus."""
    n_series: int = 256
    T: int = 501
    dt: float = 0.02

    def validate(self):
        if self.n_series < 1 or self.T < 3 or not self.dt > 0:
            raise ConfigError("corpus needs n_series >= 1, T >= 3, dt > 0")
        return self


def damped_sinusoids(t, rng):
    """Sum of one to three damped (or undamped) sinusoids on an offset."""
    x = np.full(len(t), rng.normal(0.0, 1.0))
    for k in range(rng.integers(1, 4)):
        amp = rng.uniform(0.1, 2.0)
        freq = rng.uniform(0.1, 3.0)
        decay = rng.choice([0.0, rng.uniform(0.05, 1.5)])
        phase = rng.uniform(0.0, 2*np.pi)
        x += amp*np.exp(-decay*t)*np.sin(2*np.pi*freq*t + phase)
    return x


def saturating_ramp(t, rng):
    """Exponential or tanh approach to a level, optionally delayed."""
    level = rng.normal(0.0, 3.0)
    tau = rng.uniform(0.2, 5.0)
    t0 = rng.uniform(0.0, 0.5*t[-1])
    s = np.clip(t - t0, 0.0, None)
    if rng.random() < 0.5:
        shape = 1.0 - np.exp(-s/tau)
    else:
        shape = np.tanh(s/tau)
    return rng.normal(0.0, 1.0) + level*shape


def chirp(t, rng):
    """Sinusoid with linearly swept frequency."""
    f0 = rng.uniform(0.05, 1.0)
    rate = rng.uniform(-0.1, 0.4)
    freq = np.clip(f0 + 0.5*rate*t, 0.01, None)
    return rng.uniform(0.2, 2.0)*np.sin(2*np.pi*freq*t +
        rng.uniform(0.0, 2*np.pi))


def switched_ar(t, rng):
    """Second-order autoregression whose poles switch at random times."""
    n = len(t)
    x = np.zeros(n)
    changes = set(int(k) for k in rng.integers(2, n, size=rng.integers(1, 4)))
    changes.add(2)
    noise = rng.uniform(0.002, 0.05)
    x[0] = rng.normal()
    x[1] = x[0] + rng.normal(0.0, noise)
    for k in range(2, n):
        if k in changes:
            r = rng.uniform(0.9, 0.995)
            theta = rng.uniform(0.01, 0.3)
            (a1, a2) = (2*r*np.cos(theta), -r*r)
        x[k] = a1*x[k-1] + a2*x[k-2] + rng.normal(0.0, noise)
    return x


_GENERATORS = {"sinusoid": damped_sinusoids, "ramp": saturating_ramp,
    "chirp": chirp, "switched_ar": switched_ar}


def generate_corpus(cfg, seed=0):
    """Synthetic univariate series cycling through FAMILIES.

    Series i is drawn from np.random.default_rng([seed, i]).

    Returns:
        Array (n_series, T).
    """
    cfg.validate()
    t = cfg.dt*np.arange(cfg.T)
    out = np.empty((cfg.n_series, cfg.T))
    for i in range(cfg.n_series):
        rng = np.random.default_rng([seed, i])
        out[i] = _GENERATORS[FAMILIES[i % len(FAMILIES)]](t, rng)
    logger.debug("generated %d corpus series of length %d", cfg.n_series,
        cfg.T)
    return out
