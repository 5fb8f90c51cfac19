"""Seeded mini-batch training with Adam.

A run is fully determined by (initial weights, data, config): every epoch
shuffles with a seed derived from the run seed and the epoch index, and
Adam itself is deterministic.  Validation data is scored for the history
but never influences the weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .data import BalanceMode
from .errors import ConfigError, ShapeMismatchError
from .losses import LossConfig, compute_loss
from .metrics import roc_auc
from .models import Model, WeightSet
from .seeding import mix_seed


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    balance: BalanceMode = field(default_factory=BalanceMode)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class TrainHistory:
    train_loss: list[float]
    train_auc: list[float]
    val_auc: list[float]

    def __post_init__(self):
        if not len(self.train_loss) == len(self.train_auc) == len(self.val_auc):
            raise ConfigError("history columns must have equal length")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", "train_auc", "val_auc"])
            for epoch, row in enumerate(zip(self.train_loss, self.train_auc, self.val_auc), start=1):
                writer.writerow([epoch] + [repr(float(v)) for v in row])


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update, in place, using bias-corrected moment estimates."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeMismatchError("adam_step", len(params), len(grads), len(state.m))
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatchError("adam_step", p.shape, g.shape)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= learning_rate * (m / correction1) / (np.sqrt(v / correction2) + eps)


def train(
    model: Model,
    init: WeightSet,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
) -> tuple[WeightSet, TrainHistory]:
    """Train on (features, labels) arrays and return final weights plus history.

    Class balancing is a dataset-level concern applied by the caller to the
    training split only; this loop consumes the arrays as given.
    """
    x_train, y_train = np.asarray(train_data[0], dtype=np.float64), np.asarray(train_data[1])
    x_val, y_val = np.asarray(val_data[0], dtype=np.float64), np.asarray(val_data[1])
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise ConfigError("train and validation sets must be non-empty")
    model.set_weights(init)
    params = model.parameters()
    arrays = [p.data for p in params]
    state = AdamState.for_params(arrays)

    losses, train_aucs, val_aucs = [], [], []
    for epoch in range(config.epochs):
        order = np.random.default_rng(mix_seed(config.seed, epoch)).permutation(x_train.shape[0])
        epoch_loss = 0.0
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits = model.forward(x_train[idx][:, None, :, :], training=True)
            loss = compute_loss(ad.softmax(logits, axis=1), y_train[idx], config.loss)
            grads = ad.gradients(loss, params)
            adam_step(
                arrays, grads, state,
                learning_rate=config.learning_rate,
                beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps,
            )
            epoch_loss += float(loss.data) * idx.size
        losses.append(epoch_loss / order.size)
        train_aucs.append(roc_auc(model.predict_proba(x_train)[:, 1], y_train))
        val_aucs.append(roc_auc(model.predict_proba(x_val)[:, 1], y_val))
    return model.weights(), TrainHistory(losses, train_aucs, val_aucs)


def member_config(config: TrainConfig, member: int) -> TrainConfig:
    """Per-member config: same hyperparameters, seed mixed with the member index."""
    return replace(config, seed=mix_seed(config.seed, member))
