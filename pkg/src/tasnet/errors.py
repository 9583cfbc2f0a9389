"""Exception hierarchy shared by the library and the command line."""


class TasNetError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TasNetError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(TasNetError, ValueError):
    """A model, training or run configuration violates a constraint."""


class DataError(TasNetError):
    """Input data (audio, manifests, checkpoints) is missing or malformed."""


class CheckpointError(DataError):
    """A checkpoint file is truncated, corrupted or has the wrong format."""


class NumericError(TasNetError, ArithmeticError):
    """A NaN or infinity appeared where finite values are required."""


class TapeError(TasNetError, RuntimeError):
    """Misuse of the gradient tape (reuse, foreign seed, non-scalar seed)."""


class StreamError(TasNetError, RuntimeError):
    """A stream was used after it was flushed, or is otherwise in the wrong state."""
