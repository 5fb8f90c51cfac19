"""Input validation helpers shared by the estimator API and pipeline glue."""

from __future__ import annotations

import numpy as np

from .dsp import AudioClip
from .errors import ConfigError


def check_feature_array(X, name: str = "X") -> np.ndarray:
    """Validate and return a float64 (n, frames, mels) feature array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ConfigError(f"{name} must be 3-D (n_samples, frames, mels), got shape {X.shape}")
    if X.shape[0] == 0:
        raise ConfigError(f"{name} must contain at least one sample")
    if not np.all(np.isfinite(X)):
        raise ConfigError(f"{name} contains non-finite values")
    return X


def check_binary_labels(y, n_samples: int, name: str = "y") -> np.ndarray:
    """Validate and return an int64 vector of 0/1 labels of the given length."""
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ConfigError(f"{name} must be a vector of length {n_samples}, got shape {y.shape}")
    y = y.astype(np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ConfigError(f"{name} must contain only 0/1 labels")
    return y


def check_clips(clips, name: str = "X") -> list[AudioClip]:
    """Validate a sequence of AudioClip objects."""
    clips = list(clips)
    if not clips:
        raise ConfigError(f"{name} must contain at least one clip")
    for i, clip in enumerate(clips):
        if not isinstance(clip, AudioClip):
            raise ConfigError(f"{name}[{i}] is {type(clip).__name__}, expected AudioClip")
    return clips


def check_probability_rows(probs, name: str = "probs") -> np.ndarray:
    """Validate a (n, classes) matrix whose rows lie on the simplex."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ConfigError(f"{name} must be 2-D, got shape {probs.shape}")
    if np.any(probs < -1e-9) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise ConfigError(f"{name} rows must be probability vectors")
    return probs
