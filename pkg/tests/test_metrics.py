"""AUC against the brute-force pairwise oracle, fold aggregation, selective report."""

import json
import math

import numpy as np
import pytest

from relia.ensemble import Prediction
from relia.errors import ConfigError, UndefinedMetricError
from relia.metrics import EvalReport, SelectiveReport, fold_aggregate, roc_auc, selective_report


def brute_force_auc(scores, labels):
    """O(n_pos * n_neg) pairwise count: wins + half-ties."""
    scores = np.asarray(scores)
    pos = scores[np.asarray(labels) == 1]
    neg = scores[np.asarray(labels) == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (pos.size * neg.size)


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.1], [1, 0]) == 1.0

    def test_all_ties_is_half(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_hand_case(self):
        assert roc_auc([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0]) == 0.75

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(0)
        for trial in range(60):
            n = int(rng.integers(4, 200))
            labels = rng.integers(0, 2, n)
            if labels.sum() in (0, n):
                labels[0], labels[1] = 0, 1
            # quantized scores force plenty of ties
            scores = np.round(rng.uniform(0, 1, n), 1)
            assert roc_auc(scores, labels) == brute_force_auc(scores, labels)

    def test_invariant_under_monotone_transforms(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            n = 50
            labels = rng.integers(0, 2, n)
            labels[:2] = [0, 1]
            scores = rng.normal(size=n)
            base = roc_auc(scores, labels)
            assert roc_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
            assert roc_auc(3.0 * scores + 7.0, labels) == pytest.approx(base, abs=1e-12)

    def test_label_flip_complement(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            n = 40
            labels = rng.integers(0, 2, n)
            labels[:2] = [0, 1]
            scores = np.round(rng.normal(size=n), 1)
            total = roc_auc(scores, labels) + roc_auc(scores, 1 - labels)
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.1, 0.2], [1, 1])


class TestFoldAggregate:
    def test_constant_folds(self):
        mean, std = fold_aggregate([0.8, 0.8, 0.8])
        assert mean == pytest.approx(0.8, abs=1e-12)
        assert std == pytest.approx(0.0, abs=1e-12)

    def test_two_fold_oracle(self):
        """Closed form: mean 0.85, sample std sqrt(2 * 0.05^2 / 1)."""
        mean, std = fold_aggregate([0.8, 0.9])
        assert mean == pytest.approx(0.85, abs=1e-15)
        assert std == pytest.approx(math.sqrt(0.005), rel=1e-12)
        assert std == pytest.approx(0.07071067811865475, rel=1e-12)

    def test_permutation_invariant(self):
        values = [0.7, 0.9, 0.8, 0.6, 0.75]
        assert fold_aggregate(values) == fold_aggregate(values[::-1])

    def test_single_fold_rejected(self):
        with pytest.raises(UndefinedMetricError):
            fold_aggregate([0.8])


def prediction(p_pos, uncertainty):
    return Prediction(np.array([1 - p_pos, p_pos]), uncertainty, np.array([[1 - p_pos, p_pos]]))


class TestSelectiveReport:
    def test_all_correct_any_split(self):
        preds = [prediction(0.9, 0.1), prediction(0.1, 0.4), prediction(0.8, 0.2)]
        report = selective_report(preds, [1, 0, 1], threshold=0.25)
        assert report == SelectiveReport(2, 1.0, 1, 1.0)

    def test_hand_built_fixture(self):
        """Six predictions enumerated by hand: counts and accuracies."""
        preds = [
            prediction(0.9, 0.05),   # low, correct (y=1)
            prediction(0.2, 0.10),   # low, correct (y=0)
            prediction(0.4, 0.15),   # low, wrong   (y=1)
            prediction(0.8, 0.30),   # high, correct (y=1)
            prediction(0.6, 0.40),   # high, wrong  (y=0)
            prediction(0.3, 0.50),   # high, wrong  (y=1)
        ]
        labels = [1, 0, 1, 1, 0, 1]
        report = selective_report(preds, labels, threshold=0.2)
        assert report.n_low == 3 and report.n_high == 3
        assert report.acc_low == pytest.approx(2 / 3)
        assert report.acc_high == pytest.approx(1 / 3)

    def test_empty_partition_marked_undefined(self):
        preds = [prediction(0.9, 0.3)]
        report = selective_report(preds, [1], threshold=0.1)
        assert report.n_low == 0 and report.acc_low is None
        assert report.n_high == 1 and report.acc_high == 1.0

    def test_reporting_shape_like_reference_split(self):
        """A 218-case split such as (119 low / 99 high) reports both accuracies."""
        rng = np.random.default_rng(3)
        uncertainties = np.concatenate([rng.uniform(0.0, 0.2, 119), rng.uniform(0.3, 0.5, 99)])
        preds = [prediction(0.9, u) for u in uncertainties]
        report = selective_report(preds, np.ones(218, dtype=int), threshold=0.25)
        assert (report.n_low, report.n_high) == (119, 99)
        assert report.n_low + report.n_high == 218

    def test_length_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            selective_report([prediction(0.5, 0.1)], [1, 0], 0.2)


class TestEvalReport:
    def test_json_schema_fields(self):
        report = EvalReport(
            auc=0.9, fold_aucs=[0.88, 0.92], fold_mean=0.9, fold_std=0.02,
            selective=SelectiveReport(10, 0.91, 8, 0.86), threshold_used=0.12,
        )
        data = json.loads(report.to_json())
        assert set(data) == {"auc", "fold_aucs", "fold_mean", "fold_std", "selective", "threshold_used"}
        assert set(data["selective"]) == {"n_low", "acc_low", "n_high", "acc_high"}

    def test_undefined_accuracy_serializes_as_null(self):
        report = EvalReport(
            auc=None, fold_aucs=[], fold_mean=None, fold_std=None,
            selective=SelectiveReport(0, None, 3, 1.0), threshold_used=0.0,
        )
        data = json.loads(report.to_json())
        assert data["selective"]["acc_low"] is None
