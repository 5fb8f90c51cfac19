"""Exception types shared across the package."""


class ReliaError(Exception):
    """Base class for all errors raised by this package."""


class MalformedWavError(ReliaError):
    """The byte stream is not a well-formed RIFF/WAVE container."""


class UnsupportedWavError(ReliaError):
    """The WAV file is valid but uses a codec/bit depth/channel layout we do not read."""


class SampleRateMismatchError(ReliaError):
    """A clip's sample rate does not match the frontend configuration."""


class ManifestError(ReliaError):
    """A dataset manifest is missing, malformed, or contains bad rows."""


class SilentClipError(ReliaError):
    """An all-zero clip cannot be noise-augmented at a target SNR."""


class ShapeMismatchError(ReliaError):
    """Operands passed to a tensor primitive have incompatible shapes."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class NonScalarLossError(ReliaError):
    """backward() was called on a tensor that is not a scalar."""


class ConfigError(ReliaError):
    """A configuration object violates its invariants."""


class WeightFormatError(ReliaError):
    """A weight file is truncated, has a bad magic, or an unknown version."""


class FingerprintMismatchError(ReliaError):
    """A weight file was saved for a different model configuration."""


class WeightsIncompatibleError(ReliaError):
    """Weight tensors have missing/extra names or wrong shapes for the target model."""


class UndefinedMetricError(ReliaError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""
