import numpy as np
import pytest

from mpverify.data import SynthConfig, generate_synthetic
from mpverify.pipeline import ModelConfig

TINY = dict(hidden=4, word_dim=5, char_dim=3, max_span_len=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    return ModelConfig(**TINY)


@pytest.fixture(scope="session")
def small_synth():
    cfg = SynthConfig(n_train=8, n_dev=4, n_passages=3, passage_len=7, n_fillers=6, n_keys=4, n_values=5)
    return generate_synthetic(cfg, seed=7)
