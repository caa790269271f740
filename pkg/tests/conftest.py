import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles / synthdata helpers

from auscult.nn import ModelConfig, init_params
from auscult.preprocess import AudioClip, preprocess
from auscult.store import save_model


def small_model_config():
    """Full-shape input/output (52 -> 11) but light inner layers; keeps
    service/CLI tests fast while exercising the real architecture."""
    return ModelConfig(conv1_filters=16, conv2_filters=32, gru_sets=2,
                       gru_units=(8, 16, 32), dense_units=(16, 8))


def reduced_gradcheck_config():
    """The reduced composed model used for finite-difference checks:
    8 filters, one GRU set of 4 -> 8 -> 8 units, 4-step sequence."""
    return ModelConfig(input_len=16, conv1_filters=8, conv2_filters=8,
                       kernel_size=5, gru_sets=1, gru_units=(4, 8, 8),
                       dense_units=(8, 6), n_classes=11)


def make_tone(freq_hz, fs=4000, seconds=2.5, amplitude=0.8, phase=0.0):
    t = np.arange(int(round(fs * seconds))) / fs
    return AudioClip(amplitude * np.sin(2 * np.pi * freq_hz * t + phase), fs)


@pytest.fixture(scope="session")
def preprocessed_tone():
    return preprocess(make_tone(100.0))


@pytest.fixture(scope="session")
def small_model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "small.ausc"
    params = init_params(small_model_config(), seed=7)
    save_model(params, path, metadata={"model_version": "test-small-7"})
    return path
