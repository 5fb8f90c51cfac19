"""Batch command-line entry point.

Subcommands: synthetic, featurize, train-ensemble, predict, evaluate, grid.
Every command is a pure function of (files on disk, run config): re-running
with the same inputs rewrites byte-identical outputs.  Diagnostics go to
stderr, data goes to files, and the exit code is 0 iff no errors occurred.

Settings come from a flat JSON config file (--config) overridable by
command-line flags (the flag wins).  RELIA_WORKERS caps the worker pool
used for fold/member training.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .data import (
    BalanceKind,
    BalanceMode,
    Manifest,
    SyntheticTaskConfig,
    load_manifest,
    make_synthetic_task,
    save_fold_plan,
    write_corpus,
)
from .dsp import DspConfig, log_mel, read_wav, resample, save_spectrogram
from .ensemble import EnsembleModel, Prediction, predict_batch, triage
from .errors import ConfigError, ReliaError
from .losses import LossConfig, LossKind
from .metrics import EvalReport, roc_auc, selective_report
from .models import ModelConfig, load_weights, save_weights
from .pipeline import featurize_clips, load_dataset, run_cross_validation
from .training import TrainConfig

_LOSS_TOKENS = {"ce": LossKind.CROSS_ENTROPY, "focal": LossKind.FOCAL}
_BALANCE_TOKENS = {
    "none": BalanceKind.NONE,
    "dup": BalanceKind.DUPLICATE,
    "gauss": BalanceKind.GAUSSIAN_NOISE,
}


@dataclasses.dataclass
class RunConfig:
    """Flat union of every knob a run needs; mirrors the JSON config file."""

    # frontend
    sample_rate: int = 16000
    window_len: int = 1024
    hop_len: int = 512
    n_mels: int = 64
    clip_seconds: float = 3.0
    fmin: float = 50.0
    fmax: float = 8000.0
    # model
    stem_channels: int = 16
    stages: list = dataclasses.field(default_factory=lambda: [[2, 16, 1], [2, 32, 2], [2, 64, 2]])
    # training
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # loss and balancing
    loss: str = "focal"
    gamma: float = 2.0
    alpha_pos: float = 0.25
    alpha_neg: float = 0.75
    balance: str = "gauss"
    snr_db: float = 20.0
    # ensembling and triage
    members: int = 5
    folds: int = 5
    quantile: float = 0.5
    # synthetic task
    synth_n_pos: int = 50
    synth_n_neg: int = 500
    synth_snr_db: float = 0.0
    synth_chirp_f0: float = 400.0
    synth_chirp_f1: float = 1200.0
    synth_chirp_seconds: float = 0.5
    # paths
    manifest: str | None = None
    audio_root: str | None = None
    out_dir: str = "out"

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**raw)

    def dsp_config(self) -> DspConfig:
        return DspConfig(
            sample_rate=self.sample_rate,
            window_len=self.window_len,
            hop_len=self.hop_len,
            n_mels=self.n_mels,
            clip_seconds=self.clip_seconds,
            fmin=self.fmin,
            fmax=self.fmax,
        )

    def model_config(self, dsp: DspConfig) -> ModelConfig:
        return ModelConfig(
            stem_channels=self.stem_channels,
            stages=tuple(tuple(s) for s in self.stages),
            input_shape=dsp.feature_shape,
        )

    def loss_config(self) -> LossConfig:
        if self.loss not in _LOSS_TOKENS:
            raise ConfigError(f"loss must be one of {sorted(_LOSS_TOKENS)}, got {self.loss!r}")
        return LossConfig(
            kind=_LOSS_TOKENS[self.loss],
            gamma=self.gamma,
            alpha_pos=self.alpha_pos,
            alpha_neg=self.alpha_neg,
        )

    def balance_mode(self) -> BalanceMode:
        if self.balance not in _BALANCE_TOKENS:
            raise ConfigError(f"balance must be one of {sorted(_BALANCE_TOKENS)}, got {self.balance!r}")
        return BalanceMode(_BALANCE_TOKENS[self.balance], self.snr_db)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            seed=self.seed,
            loss=self.loss_config(),
            balance=self.balance_mode(),
        )

    def manifest_or_fail(self) -> Manifest:
        if not self.manifest:
            raise ConfigError("a manifest path is required (--manifest or config key)")
        manifest = load_manifest(self.manifest)
        if self.audio_root:
            manifest.root_dir = Path(self.audio_root)
        return manifest


_OVERRIDE_KEYS = (
    "seed", "members", "folds", "loss", "balance", "snr_db", "quantile",
    "manifest", "audio_root", "out_dir", "epochs", "batch_size",
    "synth_n_pos", "synth_n_neg", "synth_snr_db",
)


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    return config


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_synthetic(config: RunConfig) -> int:
    task = SyntheticTaskConfig(
        sample_rate=config.sample_rate,
        clip_seconds=config.clip_seconds,
        chirp_band=(config.synth_chirp_f0, config.synth_chirp_f1),
        chirp_seconds=config.synth_chirp_seconds,
    )
    examples = make_synthetic_task(
        config.synth_n_pos, config.synth_n_neg, config.synth_snr_db, config.seed, task
    )
    manifest = write_corpus(examples, config.out_dir)
    print(f"wrote {len(manifest)} clips and manifest.csv to {config.out_dir}", file=sys.stderr)
    return 0


def cmd_featurize(config: RunConfig) -> int:
    dsp = config.dsp_config()
    manifest = config.manifest_or_fail()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    failures = []
    for name, label in manifest.entries:
        try:
            clip = read_wav(manifest.path_for(name))
            if clip.sample_rate != dsp.sample_rate:
                clip = resample(clip, dsp.sample_rate)
            feature_name = str(Path(name).with_suffix(".melspec"))
            target = out_dir / feature_name
            target.parent.mkdir(parents=True, exist_ok=True)
            save_spectrogram(log_mel(clip, dsp).values, target)
            rows.append([name, feature_name, "p" if label == 1 else "n"])
        except (ReliaError, OSError) as exc:
            failures.append((name, exc))
    _write_rows(out_dir / "index.csv", ["file_name", "feature_file", "label"], rows)
    # a manifest over the feature files, so train-ensemble/predict can consume them directly
    _write_rows(out_dir / "features_manifest.csv", ["file_name", "label"], [[r[1], r[2]] for r in rows])
    for name, exc in failures:
        print(f"featurize failed for {name}: {exc}", file=sys.stderr)
    return 1 if failures else 0


def _write_fold_outputs(out_dir: Path, result, config: RunConfig, dsp: DspConfig, model_config: ModelConfig) -> None:
    for fold_result in result.folds:
        fold_dir = out_dir / f"fold{fold_result.fold}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        member_files = []
        for m, ws in enumerate(fold_result.ensemble.members):
            member_file = f"member{m}.nnwt"
            save_weights(ws, fold_dir / member_file)
            fold_result.histories[m].save_csv(fold_dir / f"history_member{m}.csv")
            member_files.append(member_file)
        fold_threshold = result.threshold
        meta = {
            "dsp": dataclasses.asdict(dsp),
            "model": {
                "stem_channels": model_config.stem_channels,
                "stages": [list(s) for s in model_config.stages],
                "num_classes": model_config.num_classes,
                "input_shape": list(model_config.input_shape),
            },
            "members": member_files,
            "member_seeds": fold_result.ensemble.member_seeds,
            "fingerprint": model_config.fingerprint().hex(),
            "threshold": fold_threshold,
            "quantile": config.quantile,
        }
        with open(fold_dir / "ensemble.json", "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")


def cmd_train_ensemble(config: RunConfig) -> int:
    dsp = config.dsp_config()
    manifest = config.manifest_or_fail()
    dataset = load_dataset(manifest, dsp)
    model_config = config.model_config(dsp)
    result = run_cross_validation(
        dataset, dsp, model_config, config.train_config(),
        k=config.folds, n_members=config.members, quantile=config.quantile,
    )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_fold_plan(dataset.names, result.plan, out_dir / "folds.csv")
    _write_fold_outputs(out_dir, result, config, dsp, model_config)
    result.report.save_json(out_dir / "report.json")
    rows = []
    for idx, prediction in zip(result.pooled_order, result.pooled_predictions):
        decision = "accept" if prediction.uncertainty <= result.threshold else "refer"
        rows.append([
            dataset.names[idx], _fmt(prediction.mean_probs[1]), _fmt(prediction.uncertainty), decision,
        ])
    _write_rows(out_dir / "predictions.csv", ["file_name", "prob_positive", "uncertainty", "decision"], rows)
    print(
        f"trained {config.folds} folds x {config.members} members; "
        f"fold mean AUC {result.report.fold_mean:.4f}",
        file=sys.stderr,
    )
    return 0


def _load_ensemble_dir(path) -> tuple[EnsembleModel, DspConfig, float]:
    path = Path(path)
    meta_path = path / "ensemble.json"
    if not meta_path.is_file():
        raise ConfigError(f"no ensemble.json under {path}")
    with open(meta_path, encoding="utf-8") as f:
        meta = json.load(f)
    dsp = DspConfig(**meta["dsp"])
    model_config = ModelConfig(
        stem_channels=meta["model"]["stem_channels"],
        stages=tuple(tuple(s) for s in meta["model"]["stages"]),
        num_classes=meta["model"]["num_classes"],
        input_shape=tuple(meta["model"]["input_shape"]),
    )
    members = [load_weights(path / name, model_config) for name in meta["members"]]
    ensemble = EnsembleModel(model_config, members, list(meta["member_seeds"]))
    return ensemble, dsp, float(meta["threshold"])


def cmd_predict(config: RunConfig, ensemble_dir: str) -> int:
    ensemble, dsp, threshold = _load_ensemble_dir(ensemble_dir)
    manifest = config.manifest_or_fail()
    dataset = load_dataset(manifest, dsp)
    features = dataset.features
    if features is None:
        features = featurize_clips(dataset.clips, dsp)
    predictions = predict_batch(ensemble, features)
    accepted, _ = triage(predictions, threshold)
    accepted_set = set(accepted)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (name, prediction) in enumerate(zip(dataset.names, predictions)):
        decision = "accept" if i in accepted_set else "refer"
        rows.append([name, _fmt(prediction.mean_probs[1]), _fmt(prediction.uncertainty), decision])
    _write_rows(out_dir / "predictions.csv", ["file_name", "prob_positive", "uncertainty", "decision"], rows)
    print(f"wrote {len(rows)} predictions to {out_dir / 'predictions.csv'}", file=sys.stderr)
    return 0


def cmd_evaluate(config: RunConfig, predictions_path: str) -> int:
    manifest = config.manifest_or_fail()
    labels_by_name = dict(manifest.entries)
    with open(predictions_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        required = {"file_name", "prob_positive", "uncertainty"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ConfigError(f"{predictions_path}: expected columns {sorted(required)}")
        names, scores, uncertainties = [], [], []
        for row in reader:
            names.append(row["file_name"])
            scores.append(float(row["prob_positive"]))
            uncertainties.append(float(row["uncertainty"]))
    missing = [n for n in names if n not in labels_by_name]
    if missing:
        raise ConfigError(f"predictions reference files missing from the manifest: {missing[:5]}")
    labels = np.array([labels_by_name[n] for n in names], dtype=np.int64)
    scores = np.array(scores)
    uncertainties = np.array(uncertainties)
    threshold = float(np.quantile(uncertainties, config.quantile))
    rows = [
        Prediction(np.array([1.0 - s, s]), u, np.array([[1.0 - s, s]]))
        for s, u in zip(scores, uncertainties)
    ]
    report = EvalReport(
        auc=roc_auc(scores, labels),
        fold_aucs=[],
        fold_mean=None,
        fold_std=None,
        selective=selective_report(rows, labels, threshold),
        threshold_used=threshold,
    )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.save_json(out_dir / "evaluation.json")
    print(f"AUC {report.auc:.4f} over {len(rows)} predictions", file=sys.stderr)
    return 0


_GRID_CELLS = [
    ("ce", "none"), ("ce", "dup"), ("ce", "gauss"),
    ("focal", "none"), ("focal", "dup"), ("focal", "gauss"),
]


def cmd_grid(config: RunConfig) -> int:
    dsp = config.dsp_config()
    manifest = config.manifest_or_fail()
    dataset = load_dataset(manifest, dsp)
    model_config = config.model_config(dsp)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for loss_token, balance_token in _GRID_CELLS:
        cell = dataclasses.replace(config, loss=loss_token, balance=balance_token)
        result = run_cross_validation(
            dataset, dsp, model_config, cell.train_config(),
            k=config.folds, n_members=config.members, quantile=config.quantile,
        )
        cell_dir = out_dir / f"{loss_token}_{balance_token}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        result.report.save_json(cell_dir / "report.json")
        summary.append([loss_token, balance_token, _fmt(result.report.fold_mean), _fmt(result.report.fold_std)])
        print(
            f"grid cell loss={loss_token} balance={balance_token}: "
            f"fold mean AUC {result.report.fold_mean:.4f}",
            file=sys.stderr,
        )
    _write_rows(out_dir / "grid_summary.csv", ["loss", "balance", "fold_mean_auc", "fold_std_auc"], summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON config file (flags override it)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", dest="out_dir")
    common.add_argument("--members", type=int)
    common.add_argument("--folds", type=int)
    common.add_argument("--loss", choices=sorted(_LOSS_TOKENS))
    common.add_argument("--balance", choices=sorted(_BALANCE_TOKENS))
    common.add_argument("--snr-db", dest="snr_db", type=float)
    common.add_argument("--quantile", type=float)
    common.add_argument("--manifest")
    common.add_argument("--audio-root", dest="audio_root")
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", dest="batch_size", type=int)

    parser = argparse.ArgumentParser(prog="relia", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synthetic = sub.add_parser("synthetic", parents=[common], help="generate a synthetic WAV corpus + manifest")
    synthetic.add_argument("--n-pos", dest="synth_n_pos", type=int)
    synthetic.add_argument("--n-neg", dest="synth_n_neg", type=int)
    synthetic.add_argument("--difficulty-snr-db", dest="synth_snr_db", type=float)

    sub.add_parser("featurize", parents=[common], help="write spectrogram binaries plus an index CSV")
    sub.add_parser("train-ensemble", parents=[common], help="k-fold ensemble training with evaluation report")

    predict = sub.add_parser("predict", parents=[common], help="score a manifest with a trained ensemble")
    predict.add_argument("--ensemble-dir", required=True)

    evaluate = sub.add_parser("evaluate", parents=[common], help="evaluate a predictions CSV against labels")
    evaluate.add_argument("--predictions", required=True)

    sub.add_parser("grid", parents=[common], help="loss x balance experiment grid with summary CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        if args.command == "synthetic":
            return cmd_synthetic(config)
        if args.command == "featurize":
            return cmd_featurize(config)
        if args.command == "train-ensemble":
            return cmd_train_ensemble(config)
        if args.command == "predict":
            return cmd_predict(config, args.ensemble_dir)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.predictions)
        if args.command == "grid":
            return cmd_grid(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except ReliaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())
