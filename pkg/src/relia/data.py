"""Manifests, stratified folds, class balancing, and the synthetic task.

Balancing never removes or mutates majority examples; it only appends
minority copies (verbatim or noise-augmented) until the class counts are
equal.  All randomized operations are pure functions of their inputs and a
seed, with per-example child seeds derived via ``seeding.mix_seed`` so
augmented examples are reproducibly independent.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import AudioClip, write_wav
from .errors import ConfigError, ManifestError, SilentClipError
from .seeding import mix_seed

_LABEL_TOKENS = {"p": 1, "n": 0, "1": 1, "0": 0}


@dataclass
class LabeledExample:
    """A clip with its binary label (1 = positive/infected minority class)."""

    clip: AudioClip
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ConfigError(f"label must be 0 or 1, got {self.label!r}")


@dataclass
class Manifest:
    entries: list[tuple[str, int]]
    root_dir: Path

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.entries], dtype=np.int64)

    def path_for(self, file_name: str) -> Path:
        return self.root_dir / file_name


def load_manifest(path) -> Manifest:
    """Read a `file_name,label` CSV; labels are p/n or 1/0."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty file, expected a file_name,label header") from None
        if [h.strip() for h in header] != ["file_name", "label"]:
            raise ManifestError(f"{path}: expected header 'file_name,label', got {header!r}")
        entries: list[tuple[str, int]] = []
        seen: set[str] = set()
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ManifestError(f"{path} row {row_number}: expected 2 fields, got {len(row)}")
            name, token = row[0].strip(), row[1].strip()
            if token not in _LABEL_TOKENS:
                raise ManifestError(f"{path} row {row_number}: unknown label token {token!r}")
            if name in seen:
                raise ManifestError(f"{path} row {row_number}: duplicate file_name {name!r}")
            seen.add(name)
            entries.append((name, _LABEL_TOKENS[token]))
    return Manifest(entries, path.parent)


def save_manifest(manifest: Manifest, path) -> None:
    """Write the canonical manifest form (labels as p/n)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["file_name", "label"])
        for name, label in manifest.entries:
            writer.writerow([name, "p" if label == 1 else "n"])


@dataclass
class FoldPlan:
    """Per-example fold assignment for stratified k-fold cross-validation."""

    k: int
    assignments: np.ndarray
    seed: int

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        if self.k < 2:
            raise ConfigError("FoldPlan requires k >= 2")
        if self.assignments.size and not (
            (self.assignments >= 0).all() and (self.assignments < self.k).all()
        ):
            raise ConfigError("fold indices must lie in [0, k)")

    def val_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(labels, k: int, seed: int) -> FoldPlan:
    """Deal a seeded per-class permutation round-robin into k folds.

    Per-fold class counts differ by at most one within each class.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ConfigError("k must be at least 2")
    rng = np.random.default_rng(seed)
    assignments = np.empty(labels.size, dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise ConfigError(f"class {cls} has {idx.size} examples, fewer than k={k}")
        perm = rng.permutation(idx)
        assignments[perm] = np.arange(perm.size) % k
    return FoldPlan(k, assignments, seed)


def save_fold_plan(file_names, plan: FoldPlan, path) -> None:
    """Export a fold plan as `file_name,fold` CSV."""
    if len(file_names) != plan.assignments.size:
        raise ConfigError("file_names and fold assignments differ in length")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["file_name", "fold"])
        for name, fold in zip(file_names, plan.assignments):
            writer.writerow([name, int(fold)])


class BalanceKind(enum.Enum):
    NONE = "none"
    DUPLICATE = "duplicate"
    GAUSSIAN_NOISE = "gaussian_noise"


@dataclass(frozen=True)
class BalanceMode:
    """How to equalize class counts before training."""

    kind: BalanceKind = BalanceKind.NONE
    snr_db: float = 20.0

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite")


def add_gaussian_noise(clip: AudioClip, snr_db: float, seed: int) -> AudioClip:
    """Add seeded unit-Gaussian noise scaled to a target SNR, clamped to [-1, 1].

    The noise scale is rms(clip) / 10**(snr_db/20), so snr_db is the
    signal-to-added-noise ratio in dB.
    """
    rms = clip.rms()
    if rms == 0.0:
        raise SilentClipError("cannot target an SNR on an all-zero clip")
    scale = rms / 10.0 ** (snr_db / 20.0)
    noise = np.random.default_rng(seed).standard_normal(clip.samples.size)
    samples = np.clip(clip.samples + scale * noise, -1.0, 1.0)
    return AudioClip(samples, clip.sample_rate, clip.source_id)


def oversample_indices(labels, seed: int) -> np.ndarray:
    """Minority indices to append, in seeded shuffled cycling order, to equalize counts.

    Returns absolute indices into the label sequence; empty when the classes
    are already balanced.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("balance requires both classes to be non-empty")
    if n_pos == n_neg:
        return np.empty(0, dtype=np.int64)
    minority = np.flatnonzero(labels == (1 if n_pos < n_neg else 0))
    order = np.random.default_rng(seed).permutation(minority.size)
    deficit = abs(n_pos - n_neg)
    return minority[order[np.arange(deficit) % minority.size]]


def balance(examples: list[LabeledExample], mode: BalanceMode, seed: int) -> list[LabeledExample]:
    """Append minority copies until class counts are equal.

    DUPLICATE cycles the minority in a seeded shuffled order; GAUSSIAN_NOISE
    does the same but noise-augments each appended copy with an
    independently derived seed.  The majority class is never touched.
    """
    if mode.kind is BalanceKind.NONE:
        return list(examples)
    extras = oversample_indices([ex.label for ex in examples], seed)
    out = list(examples)
    for i, src in enumerate(extras):
        source = examples[src]
        if mode.kind is BalanceKind.DUPLICATE:
            out.append(source)
        else:
            noisy = add_gaussian_noise(source.clip, mode.snr_db, mix_seed(seed, i))
            out.append(LabeledExample(noisy, source.label))
    return out


@dataclass(frozen=True)
class SyntheticTaskConfig:
    """Knobs for the desk-scale stand-in corpus.

    Negatives are low-pass filtered white noise; positives add a randomly
    timed linear chirp mixed at ``difficulty_snr_db`` relative to the noise.
    """

    sample_rate: int = 4000
    clip_seconds: float = 1.0
    chirp_band: tuple[float, float] = (400.0, 1200.0)
    chirp_seconds: float = 0.5
    noise_cutoff_hz: float = 500.0
    noise_rms: float = 0.1


def _lowpass_noise(rng: np.random.Generator, n: int, cfg: SyntheticTaskConfig) -> np.ndarray:
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / cfg.sample_rate)
    spectrum *= 1.0 / np.sqrt(1.0 + (freqs / cfg.noise_cutoff_hz) ** 2)
    noise = np.fft.irfft(spectrum, n)
    return noise * (cfg.noise_rms / np.sqrt(np.mean(noise ** 2)))


def _chirp(cfg: SyntheticTaskConfig) -> np.ndarray:
    n = int(round(cfg.chirp_seconds * cfg.sample_rate))
    t = np.arange(n) / cfg.sample_rate
    f0, f1 = cfg.chirp_band
    phase = 2.0 * np.pi * (f0 * t + (f1 - f0) / (2.0 * cfg.chirp_seconds) * t ** 2)
    envelope = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    return np.sin(phase) * envelope


def make_synthetic_task(
    n_pos: int,
    n_neg: int,
    difficulty_snr_db: float,
    seed: int,
    config: SyntheticTaskConfig = SyntheticTaskConfig(),
) -> list[LabeledExample]:
    """Generate a deterministic labeled corpus: negatives first, then positives."""
    if n_pos < 1 or n_neg < 1:
        raise ConfigError("n_pos and n_neg must both be at least 1")
    n_samples = int(round(config.clip_seconds * config.sample_rate))
    chirp = _chirp(config)
    if chirp.size > n_samples:
        raise ConfigError("chirp_seconds exceeds clip_seconds")
    chirp_rms = np.sqrt(np.mean(chirp ** 2))
    examples: list[LabeledExample] = []
    for i in range(n_neg + n_pos):
        rng = np.random.default_rng(mix_seed(seed, i))
        x = _lowpass_noise(rng, n_samples, config)
        positive = i >= n_neg
        if positive:
            onset = rng.integers(0, n_samples - chirp.size + 1)
            gain = config.noise_rms * 10.0 ** (difficulty_snr_db / 20.0) / chirp_rms
            x = x.copy()
            x[onset:onset + chirp.size] += gain * chirp
        peak = np.max(np.abs(x))
        if peak > 0.99:
            x = x * (0.99 / peak)
        tag = f"pos_{i - n_neg:04d}" if positive else f"neg_{i:04d}"
        examples.append(LabeledExample(AudioClip(x, config.sample_rate, tag), int(positive)))
    return examples


def write_corpus(examples: list[LabeledExample], out_dir) -> Manifest:
    """Write each clip as `<source_id>.wav` plus a manifest.csv; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for ex in examples:
        name = f"{ex.clip.source_id}.wav"
        write_wav(ex.clip, out_dir / name)
        entries.append((name, ex.label))
    manifest = Manifest(entries, out_dir)
    save_manifest(manifest, out_dir / "manifest.csv")
    return manifest
