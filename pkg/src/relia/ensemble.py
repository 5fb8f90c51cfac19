"""Deep ensembles: softmax averaging, disagreement uncertainty, and triage.

Members share one architecture and hyperparameter set; diversity comes
only from the per-member seed (initialization and shuffling order).  The
ensemble probability is the arithmetic mean of member softmax outputs, and
the uncertainty of a prediction is the population standard deviation of
the member positive-class probabilities, which for binary outputs lives in
[0, 0.5].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import MelSpectrogram
from .errors import ConfigError, FingerprintMismatchError
from .models import Model, ModelConfig, WeightSet, build_model, init_random
from .seeding import mix_seed
from .training import TrainConfig, TrainHistory, member_config, train


@dataclass
class EnsembleModel:
    config: ModelConfig
    members: list[WeightSet]
    member_seeds: list[int]

    def __post_init__(self):
        if not self.members:
            raise ConfigError("an ensemble needs at least one member")
        if len(self.member_seeds) != len(self.members):
            raise ConfigError("member_seeds and members differ in length")
        fingerprint = self.config.fingerprint()
        for ws in self.members:
            if ws.config_fingerprint != fingerprint:
                raise FingerprintMismatchError("ensemble members disagree on the model config")

    @property
    def n_members(self) -> int:
        return len(self.members)


@dataclass
class Prediction:
    """Ensemble output for one input: mean probabilities plus disagreement."""

    mean_probs: np.ndarray
    uncertainty: float
    member_probs: np.ndarray


def aggregate_member_probs(member_probs: np.ndarray) -> tuple[np.ndarray, float]:
    """Mean over members and population std of the positive-class column."""
    member_probs = np.asarray(member_probs, dtype=np.float64)
    if member_probs.ndim != 2 or member_probs.shape[1] < 2:
        raise ConfigError(f"expected (members, classes) probabilities, got {member_probs.shape}")
    return member_probs.mean(axis=0), float(member_probs[:, 1].std())


def train_one_member(
    config: ModelConfig,
    init: WeightSet | None,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    train_config: TrainConfig,
    member: int,
) -> tuple[WeightSet, TrainHistory, int]:
    """Train ensemble member ``member`` under seed mix(train_config.seed, member).

    With init=None the member starts from its own random initialization;
    with a concrete WeightSet (e.g. pretrained) the starting point is shared
    and only the shuffling order varies.  Members are independent, so
    callers may run them concurrently.
    """
    tc = member_config(train_config, member)
    model = build_model(config)
    start = init if init is not None else init_random(model, tc.seed)
    weights, history = train(model, start, train_data, val_data, tc)
    return weights, history, tc.seed


def train_ensemble(
    config: ModelConfig,
    init: WeightSet | None,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    train_config: TrainConfig,
    n_members: int,
) -> tuple[EnsembleModel, list[TrainHistory]]:
    """Train M members with identical architecture/hyperparameters."""
    if n_members < 1:
        raise ConfigError("n_members must be at least 1")
    members, seeds, histories = [], [], []
    for i in range(n_members):
        weights, history, seed = train_one_member(config, init, train_data, val_data, train_config, i)
        members.append(weights)
        seeds.append(seed)
        histories.append(history)
    return EnsembleModel(config, members, seeds), histories


def _as_feature_batch(inputs, config: ModelConfig) -> np.ndarray:
    if isinstance(inputs, MelSpectrogram):
        inputs = inputs.values[None, :, :]
    features = np.asarray(inputs, dtype=np.float64)
    if features.ndim == 2:
        features = features[None, :, :]
    if features.ndim != 3 or features.shape[1:] != config.input_shape:
        raise ConfigError(
            f"input shape {features.shape} does not match model input {config.input_shape}"
        )
    return features


def predict_batch(ensemble: EnsembleModel, inputs, model: Model | None = None) -> list[Prediction]:
    """Ensemble predictions for (n, frames, mels) features or MelSpectrograms."""
    features = _as_feature_batch(inputs, ensemble.config)
    model = model if model is not None else build_model(ensemble.config)
    member_probs = np.empty((ensemble.n_members, features.shape[0], ensemble.config.num_classes))
    for i, ws in enumerate(ensemble.members):
        model.set_weights(ws)
        member_probs[i] = model.predict_proba(features)
    predictions = []
    for j in range(features.shape[0]):
        mean_probs, uncertainty = aggregate_member_probs(member_probs[:, j, :])
        predictions.append(Prediction(mean_probs, uncertainty, member_probs[:, j, :].copy()))
    return predictions


def predict(ensemble: EnsembleModel, mel: MelSpectrogram | np.ndarray) -> Prediction:
    """Prediction for a single spectrogram."""
    return predict_batch(ensemble, mel)[0]


def triage(predictions, threshold: float) -> tuple[list[int], list[int]]:
    """Split prediction indices into accepted (uncertainty <= threshold) and referred."""
    if np.isnan(threshold):
        raise ConfigError("threshold must not be NaN")
    accepted, referred = [], []
    for i, p in enumerate(predictions):
        (accepted if p.uncertainty <= threshold else referred).append(i)
    return accepted, referred


def calibrate_threshold(predictions, quantile: float) -> float:
    """Linear-interpolation quantile of the empirical uncertainty distribution."""
    if len(predictions) == 0:
        raise ConfigError("cannot calibrate a threshold from zero predictions")
    if not 0 < quantile <= 1:
        raise ConfigError("quantile must lie in (0, 1]")
    return float(np.quantile([p.uncertainty for p in predictions], quantile))


def ensemble_seed(master_seed: int, member: int) -> int:
    """The seed member i trains under, for reproducing a member externally."""
    return mix_seed(master_seed, member)
