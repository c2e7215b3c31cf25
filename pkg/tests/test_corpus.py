import numpy as np
import pytest

from gridseq.corpus import FAMILIES, CorpusConfig, generate_corpus
from gridseq.errors import ConfigError


def test_corpus_shape_and_determinism():
    cfg = CorpusConfig(n_series=2*len(FAMILIES), T=200)
    a = generate_corpus(cfg, seed=3)
    b = generate_corpus(cfg, seed=3)
    assert a.shape == (8, 200)
    assert np.array_equal(a, b)
    assert np.isfinite(a).all()
    assert not np.array_equal(a, generate_corpus(cfg, seed=4))


def test_series_depend_only_on_index():
    small = generate_corpus(CorpusConfig(n_series=3, T=100), seed=0)
    large = generate_corpus(CorpusConfig(n_series=9, T=100), seed=0)
    assert np.array_equal(small, large[:3])


def test_series_are_not_constant():
    x = generate_corpus(CorpusConfig(n_series=16, T=501), seed=1)
    assert (x.std(axis=1) > 0).all()


def test_corpus_validation():
    with pytest.raises(ConfigError):
        generate_corpus(CorpusConfig(n_series=1, T=2))
    with pytest.raises(ConfigError):
        generate_corpus(CorpusConfig(n_series=0, T=10))
