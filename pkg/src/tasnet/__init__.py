"""Time-domain speech separation with a convolutional encoder, TCN masker and decoder."""

import os as _os

# Intra-op threading is capped before numpy loads its BLAS; CTN_THREADS wins over
# the individual library variables, which otherwise default to one thread.
_threads = _os.environ.get("CTN_THREADS")
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
    if _threads is not None:
        _os.environ[_var] = _threads
    else:
        _os.environ.setdefault(_var, "1")

from .audio import AudioClip, read_wav, synthesize_mixtures, write_wav  # noqa: E402
from .errors import (  # noqa: E402
    CheckpointError,
    ConfigError,
    DataError,
    NumericError,
    ShapeError,
    StreamError,
    TapeError,
    TasNetError,
)
from .metrics import si_snr, si_snr_improvement, upit_loss  # noqa: E402
from .model import ModelConfig, ModelParams, build, forward, param_count, receptive_field  # noqa: E402
from .tensor import Tape, Tensor  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "CheckpointError", "ConfigError", "DataError", "ModelConfig", "ModelParams",
    "NumericError", "ShapeError", "StreamError", "Tape", "TapeError", "TasNetError", "Tensor",
    "build", "forward", "param_count", "read_wav", "receptive_field", "si_snr",
    "si_snr_improvement", "synthesize_mixtures", "upit_loss", "write_wav",
]
