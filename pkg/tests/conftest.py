import numpy as np
import pytest

from gridseq.model import ModelConfig, init_parameters
from gridseq.simulator import STABLE, UNSTABLE, Trajectory


def tiny_config(**overrides):
    """One T-block, width 8, P = 3 patches over a 24-sample window."""
    kwargs = dict(L=1, h=2, d=8, d_ff=16, L_seq=24, L_pred=1, L_p=8, S=8)
    kwargs.update(overrides)
    return ModelConfig(**kwargs).validate()


def make_trajectories(n, n_g=1, T=40, seed=0, dt=0.02):
    """Damped sinusoid channels; odd identifiers are labelled unstable."""
    rng = np.random.default_rng(seed)
    t = dt*np.arange(T)
    trajs = []
    for i in range(n):
        rows = []
        for c in range(2*n_g):
            amp = rng.uniform(0.1, 1.0)
            freq = rng.uniform(0.3, 1.5)
            rows.append(rng.normal() + amp*np.exp(-0.2*t)*np.sin(
                2*np.pi*freq*t + rng.uniform(0, 2*np.pi)))
        trajs.append(Trajectory(np.array(rows), dt,
            label=UNSTABLE if i % 2 else STABLE, ident=i))
    return trajs


@pytest.fixture
def config():
    return tiny_config()


@pytest.fixture
def params(config):
    return init_parameters(config, seed=3)


@pytest.fixture
def trajectories():
    return make_trajectories(6, n_g=1, T=40, seed=1)
