"""End-to-end orchestration: featurization, k-fold ensembles, and the grid.

This is the layer the CLI drives.  Fold x member training jobs are pure
functions of their inputs, so they can be fanned out over a process pool;
results are keyed by (fold, member) and written back in a fixed order,
which keeps every output byte-identical regardless of worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import (
    BalanceKind,
    BalanceMode,
    FoldPlan,
    LabeledExample,
    Manifest,
    balance,
    oversample_indices,
    stratified_kfold,
)
from .dsp import AudioClip, DspConfig, load_spectrogram, log_mel, read_wav, resample
from .ensemble import (
    EnsembleModel,
    Prediction,
    calibrate_threshold,
    predict_batch,
    train_one_member,
)
from .errors import ConfigError
from .metrics import EvalReport, fold_aggregate, roc_auc, selective_report
from .models import ModelConfig, WeightSet
from .seeding import mix_seed
from .training import TrainConfig, TrainHistory

_FOLD_SALT = 101  # context tag so fold-level streams never collide with member streams


def default_workers() -> int:
    """Worker pool size: available parallelism, capped by RELIA_WORKERS."""
    workers = os.cpu_count() or 1
    env = os.environ.get("RELIA_WORKERS")
    if env:
        try:
            workers = min(workers, max(1, int(env)))
        except ValueError:
            raise ConfigError(f"RELIA_WORKERS must be an integer, got {env!r}") from None
    return workers


@dataclass
class AudioDataset:
    """Loaded dataset: raw clips, or pre-featurized arrays, plus labels."""

    names: list[str]
    labels: np.ndarray
    clips: list[AudioClip] | None = None
    features: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if (self.clips is None) == (self.features is None):
            raise ConfigError("dataset must hold exactly one of clips or features")

    def __len__(self) -> int:
        return len(self.names)


def featurize_clips(clips, dsp: DspConfig) -> np.ndarray:
    return np.stack([log_mel(clip, dsp).values for clip in clips])


def load_dataset(manifest: Manifest, dsp: DspConfig) -> AudioDataset:
    """Read manifest entries: .wav files are decoded (and resampled to the
    configured rate); .melspec files are loaded as ready-made features."""
    names = [name for name, _ in manifest.entries]
    labels = manifest.labels
    suffixes = {os.path.splitext(name)[1].lower() for name in names}
    if suffixes <= {".melspec"}:
        features = []
        for name in names:
            values = load_spectrogram(manifest.path_for(name))
            if values.shape != dsp.feature_shape:
                raise ConfigError(
                    f"{name}: feature shape {values.shape} does not match config {dsp.feature_shape}"
                )
            features.append(values)
        return AudioDataset(names, labels, features=np.stack(features))
    clips = []
    for name in names:
        clip = read_wav(manifest.path_for(name))
        if clip.sample_rate != dsp.sample_rate:
            clip = resample(clip, dsp.sample_rate)
        clips.append(clip)
    return AudioDataset(names, labels, clips=clips)


def _fold_arrays(
    dataset: AudioDataset,
    plan: FoldPlan,
    fold: int,
    mode: BalanceMode,
    seed: int,
    dsp: DspConfig,
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Balanced, featurized train split plus untouched val split for one fold."""
    train_idx = plan.train_indices(fold)
    val_idx = plan.val_indices(fold)
    balance_seed = mix_seed(seed, _FOLD_SALT, fold)
    if dataset.clips is not None:
        train_examples = [LabeledExample(dataset.clips[i], int(dataset.labels[i])) for i in train_idx]
        train_examples = balance(train_examples, mode, balance_seed)
        x_train = featurize_clips([ex.clip for ex in train_examples], dsp)
        y_train = np.array([ex.label for ex in train_examples], dtype=np.int64)
        x_val = featurize_clips([dataset.clips[i] for i in val_idx], dsp)
    else:
        if mode.kind is BalanceKind.GAUSSIAN_NOISE:
            raise ConfigError("gaussian-noise balancing needs raw audio, not pre-featurized input")
        x_train = dataset.features[train_idx]
        y_train = dataset.labels[train_idx]
        if mode.kind is BalanceKind.DUPLICATE:
            extras = oversample_indices(y_train, balance_seed)
            if extras.size:
                x_train = np.concatenate([x_train, x_train[extras]])
                y_train = np.concatenate([y_train, y_train[extras]])
        x_val = dataset.features[val_idx]
    return (x_train, y_train), (x_val, dataset.labels[val_idx])


def _run_member_job(args) -> tuple[tuple[int, int], tuple[WeightSet, TrainHistory, int]]:
    (fold, member), config, init, train_data, val_data, tc = args
    return (fold, member), train_one_member(config, init, train_data, val_data, tc, member)


@dataclass
class FoldResult:
    fold: int
    ensemble: EnsembleModel
    histories: list[TrainHistory]
    val_indices: np.ndarray
    val_predictions: list[Prediction]
    val_auc: float


@dataclass
class CrossValResult:
    plan: FoldPlan
    folds: list[FoldResult]
    report: EvalReport
    threshold: float
    pooled_order: np.ndarray  # original dataset indices, one per pooled prediction
    pooled_predictions: list[Prediction]


def run_cross_validation(
    dataset: AudioDataset,
    dsp: DspConfig,
    model_config: ModelConfig,
    train_config: TrainConfig,
    k: int,
    n_members: int,
    quantile: float,
    workers: int | None = None,
) -> CrossValResult:
    """Stratified k-fold ensembles with pooled out-of-fold evaluation.

    Each example is scored by the ensemble of the fold that held it out;
    the report aggregates per-fold AUCs and a selective split at the given
    uncertainty quantile over the pooled predictions.
    """
    if model_config.input_shape != dsp.feature_shape:
        raise ConfigError("model input_shape must match the dsp feature shape")
    plan = stratified_kfold(dataset.labels, k, train_config.seed)
    fold_data = {}
    jobs = []
    for fold in range(k):
        train_data, val_data = _fold_arrays(dataset, plan, fold, train_config.balance, train_config.seed, dsp)
        fold_tc = replace(train_config, seed=mix_seed(train_config.seed, _FOLD_SALT, fold, 1))
        fold_data[fold] = (train_data, val_data, fold_tc)
        for member in range(n_members):
            jobs.append(((fold, member), model_config, None, train_data, val_data, fold_tc))

    workers = default_workers() if workers is None else workers
    results = {}
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            for key, value in pool.map(_run_member_job, jobs):
                results[key] = value
    else:
        for job in jobs:
            key, value = _run_member_job(job)
            results[key] = value

    folds: list[FoldResult] = []
    pooled_indices: list[int] = []
    pooled_predictions: list[Prediction] = []
    for fold in range(k):
        _, val_data, fold_tc = fold_data[fold]
        members, histories, seeds = [], [], []
        for member in range(n_members):
            ws, history, seed = results[(fold, member)]
            members.append(ws)
            histories.append(history)
            seeds.append(seed)
        fold_ensemble = EnsembleModel(model_config, members, seeds)
        predictions = predict_batch(fold_ensemble, val_data[0])
        scores = np.array([p.mean_probs[1] for p in predictions])
        val_auc = roc_auc(scores, val_data[1])
        val_idx = plan.val_indices(fold)
        folds.append(FoldResult(fold, fold_ensemble, histories, val_idx, predictions, val_auc))
        pooled_indices.extend(int(i) for i in val_idx)
        pooled_predictions.extend(predictions)

    order = np.argsort(pooled_indices, kind="stable")
    pooled_order = np.array(pooled_indices, dtype=np.int64)[order]
    pooled_predictions = [pooled_predictions[i] for i in order]
    pooled_labels = dataset.labels[pooled_order]
    pooled_scores = np.array([p.mean_probs[1] for p in pooled_predictions])
    threshold = calibrate_threshold(pooled_predictions, quantile)
    fold_aucs = [f.val_auc for f in folds]
    fold_mean, fold_std = fold_aggregate(fold_aucs)
    report = EvalReport(
        auc=roc_auc(pooled_scores, pooled_labels),
        fold_aucs=[float(a) for a in fold_aucs],
        fold_mean=fold_mean,
        fold_std=fold_std,
        selective=selective_report(pooled_predictions, pooled_labels, threshold),
        threshold_used=threshold,
    )
    return CrossValResult(plan, folds, report, threshold, pooled_order, pooled_predictions)
