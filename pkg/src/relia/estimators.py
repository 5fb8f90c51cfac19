"""scikit-learn style wrappers so the pipeline composes with the wider ecosystem.

``LogMelTransformer`` turns AudioClips into fixed-shape feature arrays and
``EnsembleAudioClassifier`` wraps ensemble training behind the familiar
fit/predict/predict_proba surface (plus ``uncertainty`` and ``triage``,
which have no sklearn counterpart).  Both follow the sklearn contract:
__init__ only stores parameters, all validation happens in fit/transform,
and get_params/set_params/clone work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .data import BalanceKind, BalanceMode, oversample_indices
from .dsp import DspConfig, log_mel
from .ensemble import calibrate_threshold, predict_batch, train_ensemble
from .errors import ConfigError
from .losses import LossConfig, LossKind
from .models import ModelConfig
from .training import TrainConfig
from .validation import check_binary_labels, check_clips, check_feature_array


class LogMelTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer: list of AudioClip -> (n, frames, mels) array."""

    def __init__(
        self,
        sample_rate: int = 16000,
        window_len: int = 1024,
        hop_len: int = 512,
        n_mels: int = 64,
        clip_seconds: float = 3.0,
        fmin: float = 50.0,
        fmax: float = 8000.0,
        standardize: bool = True,
    ):
        self.sample_rate = sample_rate
        self.window_len = window_len
        self.hop_len = hop_len
        self.n_mels = n_mels
        self.clip_seconds = clip_seconds
        self.fmin = fmin
        self.fmax = fmax
        self.standardize = standardize

    def _config(self) -> DspConfig:
        return DspConfig(
            sample_rate=self.sample_rate,
            window_len=self.window_len,
            hop_len=self.hop_len,
            n_mels=self.n_mels,
            clip_seconds=self.clip_seconds,
            fmin=self.fmin,
            fmax=self.fmax,
        )

    def fit(self, X, y=None):
        self._config()  # validate parameters
        return self

    def transform(self, X):
        config = self._config()
        clips = check_clips(X)
        return np.stack([log_mel(c, config, standardize=self.standardize).values for c in clips])


_LOSS_KINDS = {"ce": LossKind.CROSS_ENTROPY, "focal": LossKind.FOCAL}
_BALANCE_KINDS = {"none": BalanceKind.NONE, "duplicate": BalanceKind.DUPLICATE}


class EnsembleAudioClassifier(ClassifierMixin, BaseEstimator):
    """Deep-ensemble residual CNN classifier over spectrogram features.

    X is a (n_samples, frames, mels) array (e.g. LogMelTransformer output)
    and y holds binary labels.  ``balance`` here supports "none" and
    "duplicate"; waveform-level Gaussian-noise balancing needs raw audio
    and lives in relia.data.balance / the CLI pipeline.
    """

    def __init__(
        self,
        stem_channels: int = 16,
        stages: tuple = ((2, 16, 1), (2, 32, 2), (2, 64, 2)),
        n_members: int = 5,
        epochs: int = 20,
        batch_size: int = 16,
        learning_rate: float = 1e-3,
        loss: str = "focal",
        gamma: float = 2.0,
        alpha_pos: float = 0.25,
        alpha_neg: float = 0.75,
        balance: str = "duplicate",
        threshold_quantile: float = 0.5,
        seed: int = 0,
    ):
        self.stem_channels = stem_channels
        self.stages = stages
        self.n_members = n_members
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.loss = loss
        self.gamma = gamma
        self.alpha_pos = alpha_pos
        self.alpha_neg = alpha_neg
        self.balance = balance
        self.threshold_quantile = threshold_quantile
        self.seed = seed

    def _loss_config(self) -> LossConfig:
        if self.loss not in _LOSS_KINDS:
            raise ConfigError(f"loss must be one of {sorted(_LOSS_KINDS)}, got {self.loss!r}")
        return LossConfig(
            kind=_LOSS_KINDS[self.loss],
            gamma=self.gamma,
            alpha_pos=self.alpha_pos,
            alpha_neg=self.alpha_neg,
        )

    def _balance_kind(self) -> BalanceKind:
        if self.balance not in _BALANCE_KINDS:
            raise ConfigError(f"balance must be one of {sorted(_BALANCE_KINDS)}, got {self.balance!r}")
        return _BALANCE_KINDS[self.balance]

    def _balanced(self, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self._balance_kind() is BalanceKind.NONE:
            return X, y
        extras = oversample_indices(y, self.seed)
        if extras.size == 0:
            return X, y
        return np.concatenate([X, X[extras]]), np.concatenate([y, y[extras]])

    def fit(self, X, y):
        X = check_feature_array(X)
        y = check_binary_labels(y, X.shape[0])
        model_config = ModelConfig(
            stem_channels=self.stem_channels,
            stages=tuple(tuple(s) for s in self.stages),
            input_shape=X.shape[1:],
        )
        train_config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            loss=self._loss_config(),
            balance=BalanceMode(self._balance_kind()),
        )
        x_bal, y_bal = self._balanced(X, y)
        # The trainer tracks a validation AUC per epoch; fitting on everything
        # means the training data doubles as that monitor set.
        self.ensemble_, self.histories_ = train_ensemble(
            model_config, None, (x_bal, y_bal), (X, y), train_config, self.n_members
        )
        train_predictions = predict_batch(self.ensemble_, X)
        self.threshold_ = calibrate_threshold(train_predictions, self.threshold_quantile)
        self.classes_ = np.array([0, 1])
        self.input_shape_ = X.shape[1:]
        return self

    def _check_fitted(self):
        if not hasattr(self, "ensemble_"):
            raise ConfigError("this estimator is not fitted yet; call fit first")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_feature_array(X)
        return np.stack([p.mean_probs for p in predict_batch(self.ensemble_, X)])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def uncertainty(self, X) -> np.ndarray:
        """Ensemble disagreement per sample (population std of member positives)."""
        self._check_fitted()
        X = check_feature_array(X)
        return np.array([p.uncertainty for p in predict_batch(self.ensemble_, X)])

    def triage(self, X) -> np.ndarray:
        """'accept' where uncertainty <= fitted threshold, else 'refer'."""
        unc = self.uncertainty(X)
        return np.where(unc <= self.threshold_, "accept", "refer")
