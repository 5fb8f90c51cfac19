"""Shared fixtures: desk-scale configs kept tiny so the suite stays fast."""

import numpy as np
import pytest

from relia.data import make_synthetic_task, SyntheticTaskConfig
from relia.dsp import DspConfig
from relia.models import ModelConfig
from relia.pipeline import featurize_clips


@pytest.fixture(scope="session")
def tiny_dsp() -> DspConfig:
    # 15 frames x 20 mels at 4 kHz: small enough to train in seconds
    return DspConfig(
        sample_rate=4000, window_len=256, hop_len=256, n_mels=20,
        clip_seconds=1.0, fmin=50.0, fmax=2000.0,
    )


@pytest.fixture(scope="session")
def tiny_model_config(tiny_dsp) -> ModelConfig:
    return ModelConfig(stem_channels=6, stages=((1, 6, 1), (1, 12, 2)), input_shape=tiny_dsp.feature_shape)


@pytest.fixture(scope="session")
def tiny_task_config(tiny_dsp) -> SyntheticTaskConfig:
    return SyntheticTaskConfig(sample_rate=tiny_dsp.sample_rate, clip_seconds=tiny_dsp.clip_seconds)


@pytest.fixture(scope="session")
def easy_dataset(tiny_dsp, tiny_task_config):
    """Linearly separable-ish task: loud chirps, modest size; features + labels."""
    examples = make_synthetic_task(16, 32, 30.0, seed=1234, config=tiny_task_config)
    X = featurize_clips([ex.clip for ex in examples], tiny_dsp)
    y = np.array([ex.label for ex in examples], dtype=np.int64)
    return X, y
