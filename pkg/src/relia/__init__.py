"""relia: reliable minority-class detection from audio.

Log-mel frontend, Gaussian-noise augmentation, residual CNN trained with
focal loss on a self-contained autodiff engine, deep ensembles with
softmax averaging, and disagreement-based uncertainty for selective
prediction; plus a synthetic-task harness and a batch CLI.
"""

from .data import (
    BalanceKind,
    BalanceMode,
    FoldPlan,
    LabeledExample,
    Manifest,
    SyntheticTaskConfig,
    add_gaussian_noise,
    balance,
    load_manifest,
    make_synthetic_task,
    save_manifest,
    stratified_kfold,
)
from .dsp import (
    AudioClip,
    DspConfig,
    MelSpectrogram,
    decode_wav,
    encode_wav,
    log_mel,
    mel_filterbank,
    power_spectrogram,
    read_wav,
    resample,
    write_wav,
)
from .ensemble import (
    EnsembleModel,
    Prediction,
    calibrate_threshold,
    predict,
    predict_batch,
    train_ensemble,
    triage,
)
from .estimators import EnsembleAudioClassifier, LogMelTransformer
from .losses import LossConfig, LossKind, cross_entropy, focal_loss
from .metrics import EvalReport, SelectiveReport, fold_aggregate, roc_auc, selective_report
from .models import (
    Model,
    ModelConfig,
    WeightSet,
    build_model,
    init_random,
    load_weights,
    save_weights,
)
from .training import AdamState, TrainConfig, TrainHistory, adam_step, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AudioClip",
    "BalanceKind",
    "BalanceMode",
    "DspConfig",
    "EnsembleAudioClassifier",
    "EnsembleModel",
    "EvalReport",
    "FoldPlan",
    "LabeledExample",
    "LogMelTransformer",
    "LossConfig",
    "LossKind",
    "Manifest",
    "MelSpectrogram",
    "Model",
    "ModelConfig",
    "Prediction",
    "SelectiveReport",
    "SyntheticTaskConfig",
    "TrainConfig",
    "TrainHistory",
    "WeightSet",
    "add_gaussian_noise",
    "adam_step",
    "balance",
    "build_model",
    "calibrate_threshold",
    "cross_entropy",
    "decode_wav",
    "encode_wav",
    "focal_loss",
    "fold_aggregate",
    "init_random",
    "load_manifest",
    "load_weights",
    "log_mel",
    "make_synthetic_task",
    "mel_filterbank",
    "power_spectrogram",
    "predict",
    "predict_batch",
    "read_wav",
    "resample",
    "roc_auc",
    "save_manifest",
    "save_weights",
    "selective_report",
    "stratified_kfold",
    "train",
    "train_ensemble",
    "triage",
    "write_wav",
]
