"""Cross-entropy and focal loss over predicted class probabilities.

Both losses take a batch of probability vectors (already softmaxed) and
integer labels, clamp the true-class probability into
[1e-12, 1 - 1e-12] before the log, and reduce by the batch mean.  With
gamma = 0 and unit alphas the focal loss reduces exactly to cross-entropy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError

PROB_CLAMP = 1e-12


class LossKind(enum.Enum):
    CROSS_ENTROPY = "ce"
    FOCAL = "focal"


@dataclass(frozen=True)
class LossConfig:
    """Loss selection plus the focal parameters.

    gamma is the focusing strength (0 disables down-weighting); alpha_pos /
    alpha_neg reweight the two classes.  Defaults are the canonical focal
    settings with alpha_neg = 1 - alpha_pos.
    """

    kind: LossKind = LossKind.FOCAL
    gamma: float = 2.0
    alpha_pos: float = 0.25
    alpha_neg: float = 0.75

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ConfigError("gamma must be finite and >= 0")
        for name in ("alpha_pos", "alpha_neg"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")


def _validated_batch(probs, labels) -> tuple[ad.Tensor, np.ndarray]:
    probs = ad.as_tensor(probs)
    if probs.data.ndim != 2 or probs.data.shape[1] < 2:
        raise ConfigError(f"expected (batch, classes) probabilities, got shape {probs.data.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (probs.data.shape[0],):
        raise ConfigError(f"labels shape {labels.shape} does not match batch {probs.data.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.data.shape[1]):
        raise ConfigError("label out of range for the probability matrix")
    sums = probs.data.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9) or np.any(probs.data < -1e-9):
        raise ConfigError("probability rows must lie on the simplex (within 1e-9)")
    return probs, labels


def _true_class_prob(probs: ad.Tensor, labels: np.ndarray) -> ad.Tensor:
    one_hot = np.zeros(probs.data.shape)
    one_hot[np.arange(labels.size), labels] = 1.0
    picked = ad.tensor_sum(ad.mul(probs, one_hot), axis=1)
    return ad.clip(picked, PROB_CLAMP, 1.0 - PROB_CLAMP)


def cross_entropy(probs, labels) -> ad.Tensor:
    """Mean over the batch of -log(probability assigned to the true class)."""
    probs, labels = _validated_batch(probs, labels)
    return ad.mean(ad.neg(ad.log(_true_class_prob(probs, labels))))


def focal_loss(probs, labels, config: LossConfig) -> ad.Tensor:
    """Mean of -alpha_i * (1 - p_i)**gamma * log(p_i) over the batch.

    p_i is the true-class probability; alpha_i is alpha_pos for positive
    labels and alpha_neg otherwise.  The (1 - p_i)**gamma modulating factor
    drives easy examples' contribution toward zero as gamma grows.
    """
    probs, labels = _validated_batch(probs, labels)
    p_true = _true_class_prob(probs, labels)
    alpha = np.where(labels == 1, config.alpha_pos, config.alpha_neg)
    modulator = ad.power(ad.add(ad.neg(p_true), 1.0), config.gamma)
    weighted = ad.mul(ad.mul(alpha, modulator), ad.log(p_true))
    return ad.mean(ad.neg(weighted))


def compute_loss(probs, labels, config: LossConfig) -> ad.Tensor:
    if config.kind is LossKind.CROSS_ENTROPY:
        return cross_entropy(probs, labels)
    return focal_loss(probs, labels, config)
