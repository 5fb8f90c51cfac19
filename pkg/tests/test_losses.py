"""Loss-value oracles (frozen from direct scalar computation) and properties."""

import math

import numpy as np
import pytest

from relia import autodiff as ad
from relia.errors import ConfigError
from relia.losses import LossConfig, LossKind, cross_entropy, focal_loss

UNIT_FOCAL = LossConfig(kind=LossKind.FOCAL, gamma=0.0, alpha_pos=1.0, alpha_neg=1.0)


def batch(p_true, labels):
    """Probability matrix with the given true-class probabilities."""
    rows = []
    for p, y in zip(p_true, labels):
        rows.append([1.0 - p, p] if y == 1 else [p, 1.0 - p])
    return np.array(rows)


def random_batch(rng, n=8):
    p_pos = rng.uniform(1e-6, 1 - 1e-6, n)
    probs = np.stack([1.0 - p_pos, p_pos], axis=1)
    labels = rng.integers(0, 2, n)
    return probs, labels


class TestCrossEntropy:
    def test_certain_prediction_is_zero(self):
        assert float(cross_entropy(batch([1.0], [1]), [1]).data) == pytest.approx(0.0, abs=1e-11)

    def test_half_probability_is_ln2(self):
        loss = float(cross_entropy(batch([0.5], [0]), [0]).data)
        assert loss == pytest.approx(math.log(2.0), rel=1e-12)

    def test_two_sample_mean(self):
        """Oracle: -(ln 0.9 + ln 0.3) / 2 computed directly."""
        expected = -(math.log(0.9) + math.log(0.3)) / 2.0
        loss = float(cross_entropy(batch([0.9, 0.3], [1, 0]), [1, 0]).data)
        assert loss == pytest.approx(expected, rel=1e-12)
        assert loss == pytest.approx(0.6546666599918812, rel=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ConfigError, match="label out of range"):
            cross_entropy(batch([0.5], [1]), [2])

    def test_off_simplex_rejected(self):
        with pytest.raises(ConfigError, match="simplex"):
            cross_entropy(np.array([[0.7, 0.7]]), [0])


class TestFocalLoss:
    def test_single_positive_oracle(self):
        """0.25 * (1-0.9)^2 * (-ln 0.9), computed directly."""
        config = LossConfig(kind=LossKind.FOCAL, gamma=2.0, alpha_pos=0.25, alpha_neg=0.75)
        expected = 0.25 * 0.01 * -math.log(0.9)
        loss = float(focal_loss(batch([0.9], [1]), [1], config).data)
        assert loss == pytest.approx(expected, rel=1e-10)
        assert loss == pytest.approx(2.634012891445657e-4, rel=1e-9)

    def test_gamma_zero_unit_alpha_equals_ce(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            probs, labels = random_batch(rng)
            fl = float(focal_loss(probs, labels, UNIT_FOCAL).data)
            ce = float(cross_entropy(probs, labels).data)
            assert abs(fl - ce) < 1e-12

    def test_saturated_prediction_vanishes(self):
        """p -> 1 drives the modulated loss below 1e-20 for gamma = 2."""
        config = LossConfig(kind=LossKind.FOCAL, gamma=2.0, alpha_pos=1.0, alpha_neg=1.0)
        loss = float(focal_loss(batch([1.0 - 1e-12], [1]), [1], config).data)
        assert 0.0 <= loss < 1e-20

    def test_monotone_decreasing_in_gamma(self):
        """For fixed p < 1, increasing gamma strictly shrinks the loss."""
        rng = np.random.default_rng(1)
        for _ in range(10):
            p = rng.uniform(0.55, 0.99)
            values = []
            for gamma in (0.0, 0.5, 1.0, 2.0, 4.0):
                config = LossConfig(kind=LossKind.FOCAL, gamma=gamma, alpha_pos=0.5, alpha_neg=0.5)
                values.append(float(focal_loss(batch([p], [1]), [1], config).data))
            assert all(a > b for a, b in zip(values, values[1:]))

    def test_alpha_selected_by_label(self):
        config = LossConfig(kind=LossKind.FOCAL, gamma=0.0, alpha_pos=0.25, alpha_neg=0.75)
        pos = float(focal_loss(batch([0.5], [1]), [1], config).data)
        neg = float(focal_loss(batch([0.5], [0]), [0], config).data)
        assert pos == pytest.approx(0.25 * math.log(2.0), rel=1e-12)
        assert neg == pytest.approx(0.75 * math.log(2.0), rel=1e-12)


class TestProperties:
    def test_nonnegative_and_zero_iff_certain(self):
        rng = np.random.default_rng(2)
        config = LossConfig()
        for _ in range(20):
            probs, labels = random_batch(rng)
            assert float(cross_entropy(probs, labels).data) >= 0.0
            assert float(focal_loss(probs, labels, config).data) >= 0.0
        certain = batch([1.0, 1.0], [1, 0])
        assert float(cross_entropy(certain, [1, 0]).data) < 1e-11
        assert float(focal_loss(certain, [1, 0], config).data) < 1e-11

    def test_gradients_pass_finite_differences(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            logits = ad.Tensor(rng.normal(size=(4, 2)), requires_grad=True)
            labels = rng.integers(0, 2, 4)

            def ce():
                return cross_entropy(ad.softmax(logits, axis=1), labels)

            assert ad.finite_difference_check(ce, [logits], h=1e-5) < 1e-4

            config = LossConfig(kind=LossKind.FOCAL, gamma=2.0, alpha_pos=0.25, alpha_neg=0.75)

            def fl():
                return focal_loss(ad.softmax(logits, axis=1), labels, config)

            assert ad.finite_difference_check(fl, [logits], h=1e-5) < 1e-4

    def test_gamma_must_be_nonnegative(self):
        with pytest.raises(ConfigError):
            LossConfig(gamma=-0.1)
        with pytest.raises(ConfigError):
            LossConfig(alpha_pos=0.0)
