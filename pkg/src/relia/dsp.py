"""Audio decoding and the fixed-shape log-mel spectrogram frontend.

Every function here is a pure function of its inputs: identical bytes and
configuration produce bit-identical output, and the number of output
frames depends only on the configuration (clips are symmetrically
zero-padded or center-cropped), never on the input length.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    MalformedWavError,
    SampleRateMismatchError,
    UnsupportedWavError,
)

#: Added to mel powers before the log so silence stays finite.
LOG_EPS = 1e-10
#: Lower clamp for log-mel values, in dB.
FLOOR_DB = -100.0


@dataclass(frozen=True)
class DspConfig:
    """Frontend parameters.

    Defaults give a ~92x64 input at 16 kHz: common speech/cough settings,
    small enough for desk-scale training.
    """

    sample_rate: int = 16000
    window_len: int = 1024
    hop_len: int = 512
    n_mels: int = 64
    clip_seconds: float = 3.0
    fmin: float = 50.0
    fmax: float = 8000.0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.window_len < 2 or self.window_len & (self.window_len - 1):
            raise ConfigError("window_len must be a power of two")
        if not 0 < self.hop_len <= self.window_len:
            raise ConfigError("hop_len must satisfy 0 < hop_len <= window_len")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ConfigError("frequencies must satisfy 0 <= fmin < fmax <= sample_rate/2")
        if self.n_mels < 2:
            raise ConfigError("n_mels must be at least 2")
        if self.clip_samples < self.window_len:
            raise ConfigError("clip_seconds too short for one analysis window")

    @property
    def clip_samples(self) -> int:
        return int(round(self.clip_seconds * self.sample_rate))

    @property
    def n_frames(self) -> int:
        return 1 + (self.clip_samples - self.window_len) // self.hop_len

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1

    @property
    def feature_shape(self) -> tuple[int, int]:
        return (self.n_frames, self.n_mels)


@dataclass
class AudioClip:
    """Mono waveform with its sample rate and an opaque source identifier."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ConfigError("AudioClip requires a non-empty 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ConfigError("AudioClip samples must all be finite")
        if self.sample_rate <= 0:
            raise ConfigError("AudioClip sample_rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))


@dataclass
class MelSpectrogram:
    """Time x mel matrix of (standardized) log powers, plus its config."""

    values: np.ndarray
    config: DspConfig = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.config.feature_shape:
            raise ConfigError(
                f"spectrogram shape {self.values.shape} does not match config {self.config.feature_shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("MelSpectrogram values must all be finite")


def decode_wav(data: bytes, source_id: str = "") -> AudioClip:
    """Decode a RIFF/WAVE PCM-16 byte stream into a mono clip in [-1, 1).

    Stereo is averaged to mono; 16-bit integers are scaled by 1/32768.
    Raises MalformedWavError for container problems and UnsupportedWavError
    for codecs/bit depths/channel layouts outside PCM-16 mono/stereo.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWavError("not a RIFF/WAVE stream")
    fmt_chunk = None
    data_chunk = None
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset:offset + 4]
        (size,) = struct.unpack_from("<I", data, offset + 4)
        body_start = offset + 8
        if body_start + size > len(data):
            raise MalformedWavError(f"chunk {chunk_id!r} declares {size} bytes past end of stream")
        body = data[body_start:body_start + size]
        if chunk_id == b"fmt ":
            fmt_chunk = body
        elif chunk_id == b"data":
            data_chunk = body
        offset = body_start + size + (size & 1)  # chunks are word-aligned
    if fmt_chunk is None or data_chunk is None:
        raise MalformedWavError("missing fmt or data chunk")
    if len(fmt_chunk) < 16:
        raise MalformedWavError("fmt chunk too short")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt_chunk)
    if audio_format != 1:
        raise UnsupportedWavError(f"only PCM supported, got format tag {audio_format}")
    if bits != 16:
        raise UnsupportedWavError(f"only 16-bit samples supported, got {bits}")
    if channels not in (1, 2):
        raise UnsupportedWavError(f"only mono/stereo supported, got {channels} channels")
    frame_bytes = 2 * channels
    usable = len(data_chunk) - len(data_chunk) % frame_bytes
    if usable == 0:
        raise MalformedWavError("data chunk contains no complete frames")
    raw = np.frombuffer(data_chunk[:usable], dtype="<i2").astype(np.float64)
    if channels == 2:
        raw = raw.reshape(-1, 2).mean(axis=1)
    return AudioClip(raw / 32768.0, int(sample_rate), source_id)


def encode_wav(clip: AudioClip) -> bytes:
    """Encode a clip as mono PCM-16 WAV bytes (inverse of decode_wav)."""
    quantized = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = quantized.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    return header + payload


def read_wav(path) -> AudioClip:
    with open(path, "rb") as f:
        return decode_wav(f.read(), source_id=str(path))


def write_wav(clip: AudioClip, path) -> None:
    with open(path, "wb") as f:
        f.write(encode_wav(clip))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling to target_rate.

    Output length is round(len * target/source).
    """
    if target_rate <= 0:
        raise ConfigError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), clip.sample_rate, clip.source_id)
    n_out = int(round(clip.samples.size * target_rate / clip.sample_rate))
    n_out = max(n_out, 1)
    positions = np.arange(n_out) * (clip.sample_rate / target_rate)
    out = np.interp(positions, np.arange(clip.samples.size), clip.samples)
    return AudioClip(out, target_rate, clip.source_id)


def _fit_length(samples: np.ndarray, target: int) -> np.ndarray:
    """Symmetric zero-pad short signals; center-crop long ones."""
    n = samples.size
    if n == target:
        return samples
    if n < target:
        left = (target - n) // 2
        return np.pad(samples, (left, target - n - left))
    start = (n - target) // 2
    return samples[start:start + target]


def _hann(window_len: int) -> np.ndarray:
    # periodic Hann, the usual STFT analysis window
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window_len) / window_len)


def power_spectrogram(clip: AudioClip, config: DspConfig) -> np.ndarray:
    """Magnitude-squared STFT: (n_frames, window_len/2 + 1).

    Frames are Hann-windowed slices at hop_len stride of the clip after it
    has been padded/cropped to the configured length.
    """
    if clip.sample_rate != config.sample_rate:
        raise SampleRateMismatchError(
            f"clip at {clip.sample_rate} Hz but config expects {config.sample_rate} Hz"
        )
    x = _fit_length(clip.samples, config.clip_samples)
    starts = np.arange(config.n_frames) * config.hop_len
    frames = x[starts[:, None] + np.arange(config.window_len)[None, :]]
    spectrum = np.fft.rfft(frames * _hann(config.window_len)[None, :], axis=1)
    return np.abs(spectrum) ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: DspConfig) -> np.ndarray:
    """Triangular filters, peaks equally spaced on the mel scale: (n_mels, n_bins)."""
    bin_freqs = np.arange(config.n_bins) * config.sample_rate / config.window_len
    mel_points = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    fb = np.zeros((config.n_mels, config.n_bins))
    for m in range(config.n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def log_mel(clip: AudioClip, config: DspConfig, standardize: bool = True) -> MelSpectrogram:
    """Log-mel spectrogram: 10*log10(filterbank @ power + eps), floored at -100 dB.

    By default the result is standardized per spectrogram to zero mean and
    unit variance, so inference needs no training-set statistics.  A
    constant spectrogram (e.g. digital silence) standardizes to all zeros.
    """
    power = power_spectrogram(clip, config)
    mel_power = power @ mel_filterbank(config).T
    values = np.maximum(10.0 * np.log10(mel_power + LOG_EPS), FLOOR_DB)
    if standardize:
        mean = values.mean()
        std = values.std()
        values = (values - mean) / (std if std > 1e-12 else 1.0)
    return MelSpectrogram(values, config)


def save_spectrogram(values: np.ndarray, path) -> None:
    """Write a spectrogram matrix: 8-byte header (u32 rows, u32 cols, LE) + row-major float32."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ConfigError("spectrogram export requires a 2-D matrix")
    rows, cols = values.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", rows, cols))
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def load_spectrogram(path) -> np.ndarray:
    """Read a spectrogram written by save_spectrogram, as float64."""
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) != 8:
            raise ConfigError(f"{path}: truncated spectrogram header")
        rows, cols = struct.unpack("<II", header)
        body = f.read(rows * cols * 4)
    if len(body) != rows * cols * 4:
        raise ConfigError(f"{path}: truncated spectrogram body")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)
