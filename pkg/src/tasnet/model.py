"""Encoder / TCN mask estimator / decoder graph and architecture accounting."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import ops
from .errors import ConfigError, DataError, ShapeError
from .tensor import Tensor, apply_masks, inv, matmul, reshape, scale, transpose

ENCODERS = ("linear", "relu", "pinv")
MASKS = ("sigmoid", "softmax")
NORMS = ("gLN", "cLN")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the separation network.

    Field names double as configuration-file keys. ``norm`` defaults to
    ``cLN`` for causal and ``gLN`` for non-causal models.
    """

    n_filters: int = 512  # N, encoder basis count
    filter_len: int = 16  # L, samples per encoder window
    bottleneck: int = 128  # B
    skip_channels: int = 128  # Sc
    block_channels: int = 512  # H
    kernel: int = 3  # P
    blocks_per_repeat: int = 8  # X
    repeats: int = 3  # R
    n_sources: int = 2  # C
    causal: bool = False
    encoder: str = "linear"
    mask: str = "sigmoid"
    norm: str | None = None
    sample_rate: int = 8000

    def __post_init__(self):
        if self.norm is None:
            object.__setattr__(self, "norm", "cLN" if self.causal else "gLN")
        self.validate()

    @property
    def hop(self) -> int:
        return self.filter_len // 2

    @property
    def n_blocks(self) -> int:
        return self.blocks_per_repeat * self.repeats

    def dilations(self) -> list[int]:
        return [2**i for _ in range(self.repeats) for i in range(self.blocks_per_repeat)]

    def validate(self) -> None:
        ints = ("n_filters", "filter_len", "bottleneck", "skip_channels", "block_channels",
                "kernel", "blocks_per_repeat", "repeats", "n_sources", "sample_rate")
        for name in ints:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.filter_len % 2:
            raise ConfigError(f"filter_len must be even (decoder stride is filter_len/2), got {self.filter_len}")
        if not isinstance(self.causal, bool):
            raise ConfigError(f"causal must be a boolean, got {self.causal!r}")
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.mask not in MASKS:
            raise ConfigError(f"mask must be one of {MASKS}, got {self.mask!r}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.causal and self.norm != "cLN":
            raise ConfigError("causal models require norm = cLN")
        if not self.causal and self.norm != "gLN":
            raise ConfigError("non-causal models require norm = gLN")
        if self.encoder == "pinv":
            if self.mask != "softmax":
                raise ConfigError("the pseudo-inverse encoder requires softmax masks")
            if self.n_filters < self.filter_len:
                raise ConfigError("the pseudo-inverse encoder requires n_filters >= filter_len")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown model key(s): {', '.join(unknown)}")
        return cls(**d)


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def num_scalars(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def requires_grad_(self, flag: bool = True) -> "ModelParams":
        for t in self.tensors.values():
            t.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: Tensor(v.data.copy()) for k, v in self.tensors.items()})

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Names and shapes of every trainable tensor, in serialization order."""
    N, L, B = config.n_filters, config.filter_len, config.bottleneck
    H, Sc, P, C = config.block_channels, config.skip_channels, config.kernel, config.n_sources
    shapes: dict[str, tuple[int, ...]] = {}
    if config.encoder != "pinv":
        shapes["encoder.U"] = (N, L)
    shapes["decoder.V"] = (N, L)
    shapes["input_norm.gamma"] = (N, 1)
    shapes["input_norm.beta"] = (N, 1)
    shapes["bottleneck.weight"] = (B, N, 1)
    shapes["bottleneck.bias"] = (B,)
    for i in range(config.n_blocks):
        pre = f"blocks.{i}."
        shapes[pre + "conv1x1.weight"] = (H, B, 1)
        shapes[pre + "conv1x1.bias"] = (H,)
        shapes[pre + "prelu1.alpha"] = (1,)
        shapes[pre + "norm1.gamma"] = (H, 1)
        shapes[pre + "norm1.beta"] = (H, 1)
        shapes[pre + "dconv.weight"] = (H, 1, P)
        shapes[pre + "prelu2.alpha"] = (1,)
        shapes[pre + "norm2.gamma"] = (H, 1)
        shapes[pre + "norm2.beta"] = (H, 1)
        shapes[pre + "residual.weight"] = (B, H, 1)
        shapes[pre + "residual.bias"] = (B,)
        shapes[pre + "skip.weight"] = (Sc, H, 1)
        shapes[pre + "skip.bias"] = (Sc,)
    shapes["output.prelu.alpha"] = (1,)
    shapes["mask.weight"] = (C * N, Sc, 1)
    shapes["mask.bias"] = (C * N,)
    return shapes


def param_count(config: ModelConfig) -> int:
    return sum(math.prod(s) for s in parameter_shapes(config).values())


def receptive_field(config: ModelConfig) -> float:
    """Input span, in seconds, that influences one output frame."""
    frames = 1 + config.repeats * (config.kernel - 1) * (2**config.blocks_per_repeat - 1)
    samples = (frames - 1) * config.hop + config.filter_len
    return samples / config.sample_rate


def conv_param_counts(channels_in: int, channels_out: int, kernel: int) -> tuple[int, int]:
    """Kernel scalar counts ``(standard, depthwise separable)`` for a G->H, size-P conv.

    Derived from the kernel shapes :func:`ops.conv1d` consumes: a dense
    ``[H, G, P]`` kernel versus a depthwise ``[G, 1, P]`` plus pointwise ``[H, G, 1]``.
    """
    standard = math.prod((channels_out, channels_in, kernel))
    separable = math.prod((channels_in, 1, kernel)) + math.prod((channels_out, channels_in, 1))
    return standard, separable


def _fan_in(name: str, shape: tuple[int, ...], config: ModelConfig) -> int | None:
    if name == "decoder.V":
        return config.n_filters
    if name == "encoder.U":
        return config.filter_len
    if name.endswith(".weight"):
        return shape[1] * shape[2]
    return None


def build(config: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Initialize parameters deterministically from ``seed``.

    Kernels are uniform in ``±sqrt(1/fan_in)``, PReLU slopes 0.25, norm gains 1,
    norm shifts and biases 0.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        fan = _fan_in(name, shape, config)
        if fan is not None:
            a = math.sqrt(1.0 / fan)
            data = rng.uniform(-a, a, size=shape)
        elif name.endswith("alpha"):
            data = np.full(shape, 0.25)
        elif name.endswith("gamma"):
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        tensors[name] = Tensor(data.astype(dtype))
    return ModelParams(config, tensors)


# ---------------------------------------------------------------------------
# graph


def encoder_kernel(params: ModelParams) -> Tensor:
    """Effective analysis kernel ``[N, 1, L]``.

    For the pseudo-inverse variant it is half of ``pinv(V)`` transposed: each
    interior sample is covered by two half-overlapping windows, so the halving
    makes decode(encode(x)) the identity away from the two edge hops.
    """
    cfg = params.config
    if cfg.encoder == "pinv":
        V = params["decoder.V"]
        Vt = transpose(V)
        pinv = matmul(inv(matmul(Vt, V)), Vt)  # [L, N]
        k = scale(transpose(pinv), 0.5)
    else:
        k = params["encoder.U"]
    return reshape(k, (cfg.n_filters, 1, cfg.filter_len))


def _as_signal(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[None]
    return Tensor(arr)


def encode(params: ModelParams, x) -> Tensor:
    """Frame ``x`` (``[1, T]`` or ``[batch, 1, T]``) into ``[N, F]`` features at hop L/2."""
    cfg = params.config
    x = _as_signal(x)
    if x.shape[-2] != 1:
        raise ShapeError(f"encode expects a mono signal [1, T], got {x.shape}")
    t = x.shape[-1]
    if t < cfg.filter_len:
        raise ShapeError(f"signal of {t} samples is shorter than one window ({cfg.filter_len})")
    if x.dtype != params.dtype:
        x = Tensor(x.data.astype(params.dtype)) if not x.requires_grad else x
    w = ops.conv1d(x, encoder_kernel(params), stride=cfg.hop)
    if cfg.encoder == "relu":
        w = ops.activation("relu", w)
    return w


def _norm(params: ModelParams, f: Tensor, prefix: str) -> Tensor:
    fn = ops.cumulative_layer_norm if params.config.norm == "cLN" else ops.global_layer_norm
    return fn(f, params[prefix + ".gamma"], params[prefix + ".beta"])


def block_padding(config: ModelConfig, dilation: int) -> tuple[int, int]:
    total = (config.kernel - 1) * dilation
    if config.causal:
        return total, 0
    left = total // 2
    return left, total - left


def tcn_block(params: ModelParams, x: Tensor, index: int, dilation: int) -> tuple[Tensor, Tensor]:
    """One 1-D convolutional block; returns ``(residual_output, skip)``."""
    cfg = params.config
    pre = f"blocks.{index}."
    y = ops.conv1d(x, params[pre + "conv1x1.weight"], params[pre + "conv1x1.bias"])
    y = ops.prelu(y, params[pre + "prelu1.alpha"])
    y = _norm(params, y, pre + "norm1")
    pl, pr = block_padding(cfg, dilation)
    y = ops.conv1d(y, params[pre + "dconv.weight"], dilation=dilation, pad_left=pl,
                   pad_right=pr, groups=cfg.block_channels)
    y = ops.prelu(y, params[pre + "prelu2.alpha"])
    y = _norm(params, y, pre + "norm2")
    res = ops.conv1d(y, params[pre + "residual.weight"], params[pre + "residual.bias"])
    skip = ops.conv1d(y, params[pre + "skip.weight"], params[pre + "skip.bias"])
    return x + res, skip


def separate_masks(params: ModelParams, w: Tensor) -> Tensor:
    """Estimate C masks ``[C, N, F]`` (or ``[batch, C, N, F]``) from encoder features."""
    cfg = params.config
    if w.shape[-2] != cfg.n_filters:
        raise ShapeError(f"features have {w.shape[-2]} channels, model expects {cfg.n_filters}")
    x = _norm(params, w, "input_norm")
    x = ops.conv1d(x, params["bottleneck.weight"], params["bottleneck.bias"])
    skip_sum = None
    for i, d in enumerate(cfg.dilations()):
        x, skip = tcn_block(params, x, i, d)
        skip_sum = skip if skip_sum is None else skip_sum + skip
    y = ops.prelu(skip_sum, params["output.prelu.alpha"])
    logits = ops.conv1d(y, params["mask.weight"], params["mask.bias"])
    shape = logits.shape[:-2] + (cfg.n_sources, cfg.n_filters, logits.shape[-1])
    logits = reshape(logits, shape)
    kind = "sigmoid" if cfg.mask == "sigmoid" else "softmax_over_sources"
    return ops.activation(kind, logits, source_axis=-3)


def decode(params: ModelParams, d: Tensor) -> Tensor:
    """Synthesize waveforms from masked features ``[..., N, F]`` -> ``[..., 1, T]``."""
    cfg = params.config
    if d.shape[-2] != cfg.n_filters:
        raise ShapeError(f"decode expects {cfg.n_filters} feature channels, got {d.shape}")
    lead = d.shape[:-2]
    flat = reshape(d, (int(np.prod(lead)) if lead else 1, cfg.n_filters, d.shape[-1]))
    V = reshape(params["decoder.V"], (cfg.n_filters, 1, cfg.filter_len))
    y = ops.transposed_conv1d(flat, V, stride=cfg.hop)
    return reshape(y, lead + (1, y.shape[-1]))


def forward_batch(params: ModelParams, x: Tensor) -> Tensor:
    """Separate a batch ``[batch, 1, T]`` of frame-aligned signals into ``[batch, C, T]``."""
    w = encode(params, x)
    masks = separate_masks(params, w)
    y = decode(params, apply_masks(w, masks))
    return reshape(y, (x.shape[0], params.config.n_sources, y.shape[-1]))


def padded_length(config: ModelConfig, n: int) -> int:
    """Length after zero-padding the tail to whole hops and at least one window."""
    hop = config.hop
    return max(config.filter_len, -(-n // hop) * hop)


def separate_padded(params: ModelParams, samples: np.ndarray) -> np.ndarray:
    """Separate a 1-D waveform; returns ``[C, padded_length]`` without trimming."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size == 0:
        raise ShapeError(f"expected a non-empty mono waveform, got shape {samples.shape}")
    tp = padded_length(params.config, samples.size)
    x = np.zeros(tp, dtype=params.dtype)
    x[: samples.size] = samples
    out = forward_batch(params, Tensor(x[None, None]))
    return out.data[0]


def separate(params: ModelParams, samples: np.ndarray) -> np.ndarray:
    """Separate a 1-D waveform into ``[C, len(samples)]`` estimates."""
    samples = np.asarray(samples)
    return separate_padded(params, samples)[:, : samples.shape[-1]]


def forward(params: ModelParams, mixture) -> list:
    """Separate an :class:`~tasnet.audio.AudioClip` into C clips of equal length."""
    from .audio import AudioClip

    if mixture.sample_rate != params.config.sample_rate:
        raise DataError(
            f"mixture sample rate {mixture.sample_rate} Hz does not match the model's "
            f"{params.config.sample_rate} Hz"
        )
    est = separate(params, mixture.samples)
    return [AudioClip(e.astype(np.float64), mixture.sample_rate) for e in est]
