"""Residual convolutional classifier, weight init, and the portable weight file.

The architecture is a configurable residual family: a 3x3 stem
(conv-bn-relu), stages of basic two-conv residual blocks with identity or
1x1-projection shortcuts, global average pooling, and a linear head.  The
default is a ~100k-parameter desk-scale net; deeper config points are
expressible but nothing here assumes a particular depth.

Weight sets are immutable name->array maps tied to a model configuration
through an 8-byte fingerprint, and serialize to a versioned little-endian
binary format so weights can be produced or consumed outside this package.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (
    ConfigError,
    FingerprintMismatchError,
    WeightFormatError,
    WeightsIncompatibleError,
)

WEIGHT_MAGIC = b"NNWT"
WEIGHT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    stem_channels: int = 16
    stages: tuple[tuple[int, int, int], ...] = ((2, 16, 1), (2, 32, 2), (2, 64, 2))
    num_classes: int = 2
    input_shape: tuple[int, int] = (92, 64)

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(tuple(int(v) for v in s) for s in self.stages))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        if self.stem_channels < 1:
            raise ConfigError("stem_channels must be positive")
        if not self.stages:
            raise ConfigError("stages must be non-empty")
        for blocks, channels, stride in self.stages:
            if blocks < 1 or channels < 1 or stride not in (1, 2):
                raise ConfigError(f"bad stage spec {(blocks, channels, stride)}")
        if self.num_classes != 2:
            raise ConfigError("this classifier family is binary: num_classes must be 2")
        if any(v < 1 for v in self.input_shape):
            raise ConfigError("input_shape dims must be positive")

    def fingerprint(self) -> bytes:
        payload = json.dumps(
            {
                "stem_channels": self.stem_channels,
                "stages": [list(s) for s in self.stages],
                "num_classes": self.num_classes,
                "input_shape": list(self.input_shape),
            },
            sort_keys=True,
        ).encode()
        return hashlib.sha256(payload).digest()[:8]


@dataclass(frozen=True)
class WeightSet:
    """Immutable named tensors plus the fingerprint of the config they fit."""

    tensors: dict[str, np.ndarray]
    config_fingerprint: bytes

    def __post_init__(self):
        frozen = OrderedDict()
        for name, value in self.tensors.items():
            arr = np.array(value, dtype=np.float64)
            arr.flags.writeable = False
            frozen[name] = arr
        object.__setattr__(self, "tensors", frozen)
        if len(self.config_fingerprint) != 8:
            raise ConfigError("config_fingerprint must be 8 bytes")


class _Conv:
    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: int, stride: int, padding: int):
        self.name = name
        self.stride = stride
        self.padding = padding
        self.weight = ad.Tensor(np.zeros((out_ch, in_ch, kernel, kernel)), requires_grad=True)

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return ad.conv2d(x, self.weight, stride=self.stride, padding=self.padding)

    def register(self, params: OrderedDict) -> None:
        params[self.name + ".weight"] = self.weight


class _BatchNorm:
    def __init__(self, name: str, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.weight = ad.Tensor(np.ones(channels), requires_grad=True)
        self.bias = ad.Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def __call__(self, x: ad.Tensor, training: bool) -> ad.Tensor:
        return ad.batchnorm2d(
            x, self.weight, self.bias, self.running_mean, self.running_var,
            training=training, momentum=self.momentum, eps=self.eps,
        )

    def register(self, params: OrderedDict, buffers: OrderedDict) -> None:
        params[self.name + ".weight"] = self.weight
        params[self.name + ".bias"] = self.bias
        buffers[self.name + ".running_mean"] = self.running_mean
        buffers[self.name + ".running_var"] = self.running_var


class _Linear:
    def __init__(self, name: str, in_features: int, out_features: int):
        self.name = name
        self.weight = ad.Tensor(np.zeros((in_features, out_features)), requires_grad=True)
        self.bias = ad.Tensor(np.zeros(out_features), requires_grad=True)

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return ad.add(ad.matmul(x, self.weight), self.bias)

    def register(self, params: OrderedDict) -> None:
        params[self.name + ".weight"] = self.weight
        params[self.name + ".bias"] = self.bias


class _ResidualBlock:
    """conv-bn-relu-conv-bn plus identity/projection shortcut, relu after add."""

    def __init__(self, name: str, in_ch: int, out_ch: int, stride: int):
        self.conv1 = _Conv(name + ".conv1", in_ch, out_ch, 3, stride, 1)
        self.bn1 = _BatchNorm(name + ".bn1", out_ch)
        self.conv2 = _Conv(name + ".conv2", out_ch, out_ch, 3, 1, 1)
        self.bn2 = _BatchNorm(name + ".bn2", out_ch)
        if stride != 1 or in_ch != out_ch:
            self.proj_conv = _Conv(name + ".proj.conv", in_ch, out_ch, 1, stride, 0)
            self.proj_bn = _BatchNorm(name + ".proj.bn", out_ch)
        else:
            self.proj_conv = None
            self.proj_bn = None

    def __call__(self, x: ad.Tensor, training: bool) -> ad.Tensor:
        out = ad.relu(self.bn1(self.conv1(x), training))
        out = self.bn2(self.conv2(out), training)
        shortcut = x if self.proj_conv is None else self.proj_bn(self.proj_conv(x), training)
        return ad.relu(ad.add(out, shortcut))

    def register(self, params: OrderedDict, buffers: OrderedDict) -> None:
        self.conv1.register(params)
        self.bn1.register(params, buffers)
        self.conv2.register(params)
        self.bn2.register(params, buffers)
        if self.proj_conv is not None:
            self.proj_conv.register(params)
            self.proj_bn.register(params, buffers)


class Model:
    """Residual classifier instance: (batch, 1, frames, mels) -> logits (batch, 2)."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.stem_conv = _Conv("stem.conv", 1, config.stem_channels, 3, 1, 1)
        self.stem_bn = _BatchNorm("stem.bn", config.stem_channels)
        self.blocks: list[_ResidualBlock] = []
        in_ch = config.stem_channels
        h, w = config.input_shape
        for s, (blocks, channels, stride) in enumerate(config.stages):
            for b in range(blocks):
                block_stride = stride if b == 0 else 1
                if block_stride == 2 and (h < 2 or w < 2):
                    raise ConfigError(
                        f"input shape {config.input_shape} too small for the stride schedule"
                    )
                self.blocks.append(_ResidualBlock(f"stages.{s}.{b}", in_ch, channels, block_stride))
                in_ch = channels
                if block_stride == 2:
                    h, w = (h + 1) // 2, (w + 1) // 2
        self.head = _Linear("head", in_ch, config.num_classes)
        self._params: OrderedDict[str, ad.Tensor] = OrderedDict()
        self._buffers: OrderedDict[str, np.ndarray] = OrderedDict()
        self.stem_conv.register(self._params)
        self.stem_bn.register(self._params, self._buffers)
        for block in self.blocks:
            block.register(self._params, self._buffers)
        self.head.register(self._params)

    @property
    def fingerprint(self) -> bytes:
        return self.config.fingerprint()

    def forward(self, x, training: bool = False) -> ad.Tensor:
        x = ad.as_tensor(x)
        expected = (1, *self.config.input_shape)
        if x.data.ndim != 4 or x.data.shape[1:] != expected:
            raise ConfigError(f"expected input (batch, {expected[0]}, {expected[1]}, {expected[2]}), got {x.data.shape}")
        out = ad.relu(self.stem_bn(self.stem_conv(x), training))
        for block in self.blocks:
            out = block(out, training)
        return self.head(ad.global_avg_pool(out))

    def parameters(self) -> list[ad.Tensor]:
        return list(self._params.values())

    def named_parameters(self) -> OrderedDict[str, ad.Tensor]:
        return OrderedDict(self._params)

    def weights(self) -> WeightSet:
        tensors = OrderedDict((name, t.data.copy()) for name, t in self._params.items())
        for name, buf in self._buffers.items():
            tensors[name] = buf.copy()
        return WeightSet(tensors, self.fingerprint)

    def set_weights(self, ws: WeightSet) -> None:
        if ws.config_fingerprint != self.fingerprint:
            raise FingerprintMismatchError("weight set was built for a different model config")
        _check_names_and_shapes(self, ws)
        for name, tensor in self._params.items():
            np.copyto(tensor.data, ws.tensors[name])
        for name, buf in self._buffers.items():
            np.copyto(buf, ws.tensors[name])

    def predict_proba(self, features: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Inference-mode class probabilities for (n, frames, mels) features."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 3:
            raise ConfigError(f"expected (n, frames, mels) features, got {features.shape}")
        out = np.empty((features.shape[0], self.config.num_classes))
        with ad.no_grad():
            for start in range(0, features.shape[0], batch_size):
                chunk = features[start:start + batch_size]
                logits = self.forward(chunk[:, None, :, :], training=False)
                out[start:start + chunk.shape[0]] = ad.softmax(logits, axis=1).data
        return out


def build_model(config: ModelConfig) -> Model:
    return Model(config)


def _expected_layout(model: Model) -> OrderedDict[str, tuple]:
    layout = OrderedDict((name, t.data.shape) for name, t in model._params.items())
    for name, buf in model._buffers.items():
        layout[name] = buf.shape
    return layout


def _check_names_and_shapes(model: Model, ws: WeightSet) -> None:
    layout = _expected_layout(model)
    missing = sorted(set(layout) - set(ws.tensors))
    extra = sorted(set(ws.tensors) - set(layout))
    if missing or extra:
        raise WeightsIncompatibleError(f"missing tensors {missing}, extra tensors {extra}")
    for name, shape in layout.items():
        if ws.tensors[name].shape != shape:
            raise WeightsIncompatibleError(
                f"{name}: expected shape {shape}, got {ws.tensors[name].shape}"
            )


def _draw_parameter(rng: np.random.Generator, name: str, shape: tuple) -> np.ndarray:
    """He fan-in Gaussian for conv/linear weights; ones/zeros elsewhere.

    Only conv/linear weights consume random draws, so the stream is stable
    under architectures that differ only in normalization layers.
    """
    if name.endswith("conv.weight") or name.endswith("conv1.weight") or name.endswith("conv2.weight"):
        fan_in = int(np.prod(shape[1:]))
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    if name == "head.weight":
        fan_in = shape[0]
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    if name.endswith("bn.weight") or name.endswith("bn1.weight") or name.endswith("bn2.weight"):
        return np.ones(shape)
    if name.endswith("running_var"):
        return np.ones(shape)
    return np.zeros(shape)  # biases, bn shifts, running means


def init_random(model: Model, seed: int) -> WeightSet:
    """Deterministic He-style initialization of all parameters and fresh buffers."""
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    for name, shape in _expected_layout(model).items():
        tensors[name] = _draw_parameter(rng, name, shape)
    return WeightSet(tensors, model.fingerprint)


def save_weights(ws: WeightSet, path) -> None:
    """Serialize: magic, u32 version, 8-byte fingerprint, u32 count, then per
    tensor u32 name length + name, u32 rank, u32 dims, raw little-endian f64."""
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack("<I", WEIGHT_FORMAT_VERSION))
        f.write(ws.config_fingerprint)
        f.write(struct.pack("<I", len(ws.tensors)))
        for name, arr in ws.tensors.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_weights(path, config: ModelConfig, head_reset: bool = False, head_seed: int = 0) -> WeightSet:
    """Read a weight file and validate it against the given configuration.

    With ``head_reset`` the classifier head tensors are freshly drawn with
    the standard init policy (the transfer-learning entry point); all other
    tensors come from the file unchanged.
    """
    with open(path, "rb") as f:
        data = f.read()

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise WeightFormatError(f"{path}: truncated while reading {what}")
        chunk = data[offset:offset + n]
        offset += n
        return chunk

    offset = 0
    if take(4, "magic") != WEIGHT_MAGIC:
        raise WeightFormatError(f"{path}: bad magic, not a weight file")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != WEIGHT_FORMAT_VERSION:
        raise WeightFormatError(f"{path}: unsupported format version {version}")
    fingerprint = take(8, "fingerprint")
    if fingerprint != config.fingerprint():
        raise FingerprintMismatchError(f"{path}: weight file fingerprint does not match config")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        size = int(np.prod(shape)) if rank else 1
        raw = take(8 * size, f"data for {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape)
    ws = WeightSet(tensors, fingerprint)
    model = build_model(config)
    _check_names_and_shapes(model, ws)
    if head_reset:
        rng = np.random.default_rng(head_seed)
        fresh = OrderedDict(ws.tensors)
        for name in fresh:
            if name.startswith("head."):
                fresh[name] = _draw_parameter(rng, name, fresh[name].shape)
        ws = WeightSet(fresh, fingerprint)
    return ws
