"""Adam oracles, training determinism, learning on an easy task, leakage checks."""

import hashlib

import numpy as np
import pytest

from relia.errors import ShapeMismatchError
from relia.losses import LossConfig, LossKind
from relia.models import build_model, init_random
from relia.training import AdamState, TrainConfig, TrainHistory, adam_step, train


class TestAdamStep:
    def test_zero_gradient_leaves_params_unchanged(self):
        params = [np.array([1.0, -2.0])]
        grads = [np.zeros(2)]
        state = AdamState.for_params(params)
        adam_step(params, grads, state, learning_rate=1e-3)
        np.testing.assert_array_equal(params[0], [1.0, -2.0])
        assert state.t == 1

    @pytest.mark.parametrize("g", [1e-3, 0.1, 1.0, -5.0])
    def test_first_step_magnitude_near_lr(self, g):
        """First-step update is lr*|g|/(|g| + eps): within 1e-6 of lr for |g| >= 1e-3."""
        params = [np.array([0.0])]
        state = AdamState.for_params(params)
        adam_step(params, [np.array([g])], state, learning_rate=1e-3)
        expected = 1e-3 * abs(g) / (abs(g) + 1e-8)
        assert abs(params[0][0]) == pytest.approx(expected, abs=1e-15)
        assert abs(abs(params[0][0]) - 1e-3) < 1e-6
        assert np.sign(params[0][0]) == -np.sign(g)

    def test_deterministic(self):
        def run():
            params = [np.array([0.5, -0.5]), np.array([[1.0]])]
            grads = [np.array([0.1, 0.2]), np.array([[-0.3]])]
            state = AdamState.for_params(params)
            for _ in range(5):
                adam_step(params, grads, state, learning_rate=1e-2)
            return params

        a, b = run(), run()
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa, pb)

    def test_shape_mismatch_rejected(self):
        params = [np.zeros(3)]
        state = AdamState.for_params(params)
        with pytest.raises(ShapeMismatchError):
            adam_step(params, [np.zeros(4)], state, learning_rate=1e-3)


def split_dataset(X, y, seed=0):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    cut = int(0.7 * len(y))
    tr, va = order[:cut], order[cut:]
    return (X[tr], y[tr]), (X[va], y[va])


def quick_config(epochs=6, seed=0):
    return TrainConfig(
        epochs=epochs, batch_size=16, learning_rate=1e-3, seed=seed,
        loss=LossConfig(kind=LossKind.FOCAL),
    )


def weights_digest(ws):
    h = hashlib.sha256()
    for name in sorted(ws.tensors):
        h.update(name.encode())
        h.update(ws.tensors[name].tobytes())
    return h.hexdigest()


class TestTrain:
    def test_fully_deterministic(self, tiny_model_config, easy_dataset):
        X, y = easy_dataset
        train_data, val_data = split_dataset(X, y)
        model = build_model(tiny_model_config)
        init = init_random(model, 1)
        ws_a, hist_a = train(model, init, train_data, val_data, quick_config(epochs=2))
        ws_b, hist_b = train(build_model(tiny_model_config), init, train_data, val_data, quick_config(epochs=2))
        assert weights_digest(ws_a) == weights_digest(ws_b)
        assert hist_a == hist_b

    def test_seed_changes_outcome(self, tiny_model_config, easy_dataset):
        """Shuffle-order diversity: different seeds land on different weights."""
        X, y = easy_dataset
        train_data, val_data = split_dataset(X, y)
        model = build_model(tiny_model_config)
        init = init_random(model, 1)
        ws_a, _ = train(model, init, train_data, val_data, quick_config(epochs=2, seed=0))
        ws_b, _ = train(model, init, train_data, val_data, quick_config(epochs=2, seed=1))
        assert weights_digest(ws_a) != weights_digest(ws_b)

    def test_learns_separable_task(self, tiny_model_config, easy_dataset):
        """Final training AUC >= 0.99 on the high-SNR synthetic task."""
        X, y = easy_dataset
        train_data, val_data = split_dataset(X, y)
        model = build_model(tiny_model_config)
        ws, history = train(model, init_random(model, 3), train_data, val_data, quick_config(epochs=6))
        assert history.train_auc[-1] >= 0.99
        assert history.val_auc[-1] >= 0.9

    def test_loss_trend_smoothed_non_increasing(self, tiny_model_config, easy_dataset):
        X, y = easy_dataset
        train_data, val_data = split_dataset(X, y)
        model = build_model(tiny_model_config)
        _, history = train(model, init_random(model, 3), train_data, val_data, quick_config(epochs=6))
        smoothed = np.convolve(history.train_loss, np.ones(3) / 3, mode="valid")
        assert np.all(np.diff(smoothed) <= 1e-6)

    def test_validation_never_influences_weights(self, tiny_model_config, easy_dataset):
        X, y = easy_dataset
        train_data, val_data = split_dataset(X, y)
        perturbed_val = (val_data[0] + 0.37, val_data[1][::-1].copy())
        model = build_model(tiny_model_config)
        init = init_random(model, 4)
        ws_a, _ = train(model, init, train_data, val_data, quick_config(epochs=2))
        ws_b, _ = train(model, init, train_data, perturbed_val, quick_config(epochs=2))
        assert weights_digest(ws_a) == weights_digest(ws_b)

    def test_history_lengths_and_csv(self, tiny_model_config, easy_dataset, tmp_path):
        X, y = easy_dataset
        train_data, val_data = split_dataset(X, y)
        model = build_model(tiny_model_config)
        _, history = train(model, init_random(model, 5), train_data, val_data, quick_config(epochs=3))
        assert len(history.train_loss) == len(history.train_auc) == len(history.val_auc) == 3
        path = tmp_path / "history.csv"
        history.save_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,train_auc,val_auc"
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "1"
        assert float(first[1]) == history.train_loss[0]


class TestTrainHistory:
    def test_unequal_columns_rejected(self):
        from relia.errors import ConfigError

        with pytest.raises(ConfigError):
            TrainHistory([0.5], [0.9, 0.9], [0.8])
