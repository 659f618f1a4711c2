"""
Shared fixtures: a toy model (d=8, h=2, one layer, N=6, 4 labels) and
small generated datasets.
"""

import numpy as np
import pytest

from config import SynthConfig, TrainConfig
from ehr.batching import Batch
from ehr.synthetic import generate_synthetic
from ehr.trajectory import build_instances
from model.trace import create_model

TOY_VOCAB = 10
TOY_LABELS = 4
TOY_SETTINGS = dict(d_model=8, n_heads=2, n_layers=1, d_ff=16, m_decay=3, max_len=6, seed=3)


def build_batch(rng, lengths, vocab_size=TOY_VOCAB, num_labels=TOY_LABELS, max_len=6):
    """Random batch; row r holds lengths[r] history tokens, the mask token, then padding"""
    size = len(lengths)
    width = max_len + 1
    token_ids = np.zeros((size, width), dtype=np.int64)
    times = np.zeros((size, width))
    pad_mask = np.zeros((size, width), dtype=bool)
    labels = np.zeros((size, num_labels))
    for row, n in enumerate(lengths):
        token_ids[row, :n] = rng.integers(3, vocab_size, size=n)
        history_times = np.sort(rng.uniform(0.0, 72.0, size=n))
        times[row, :n] = history_times
        token_ids[row, n] = 1
        times[row, n] = (history_times[-1] if n else 0.0) + 24.0
        pad_mask[row, : n + 1] = True
        labels[row] = rng.random(num_labels) < 0.5
        labels[row, row % num_labels] = 1.0
    return Batch(token_ids, times, pad_mask, labels, np.asarray(lengths, dtype=np.int64))


@pytest.fixture
def toy_config():
    return TrainConfig(**TOY_SETTINGS)


@pytest.fixture
def toy_model(toy_config):
    return create_model(toy_config, TOY_VOCAB, TOY_LABELS)


@pytest.fixture
def make_model():
    """Toy-sized model with selected settings replaced"""
    def build(**overrides):
        config = TrainConfig(**{**TOY_SETTINGS, **overrides})
        return create_model(config, TOY_VOCAB, TOY_LABELS)

    return build


@pytest.fixture
def make_batch():
    return build_batch


@pytest.fixture
def toy_batch():
    return build_batch(np.random.default_rng(0), [3, 6, 1])


@pytest.fixture
def small_synth_config():
    return SynthConfig(n_patients=12, n_lab_codes=6, n_med_codes=3, n_diag_codes=4, n_proc_codes=2, panel_size_max=4)


@pytest.fixture
def small_dataset(small_synth_config):
    trajectories = generate_synthetic(small_synth_config, seed=11)
    return trajectories, build_instances(trajectories)
