"""Frame-synchronous inference for causal models.

A stream consumes arbitrary-size chunks of samples and emits separated audio
one hop at a time. Frames are always processed one by one, so the output does
not depend on how the input was chunked. Every emitted sample depends only on
input that has already been pushed.
"""

from __future__ import annotations

import gc
import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, StreamError
from .model import ModelParams, encoder_kernel


class StreamWeights:
    """Read-only, kernel-friendly copy of a causal model's parameters."""

    def __init__(self, params: ModelParams):
        cfg = params.config
        if not cfg.causal:
            raise ConfigError("streaming needs a causal model (causal = true, norm = cLN)")
        self.config = cfg
        self.dtype = params.dtype
        nb = cfg.n_blocks

        def f32(a):
            return np.ascontiguousarray(a, dtype=np.float32)

        def f64(a):
            return np.ascontiguousarray(a, dtype=np.float64)

        def stack(suffix, fn=np.asarray):
            return fn(np.stack([params[f"blocks.{i}.{suffix}"].data for i in range(nb)]))

        self.encT = f64(encoder_kernel(params).data.reshape(cfg.n_filters, cfg.filter_len).T)
        self.relu = cfg.encoder == "relu"
        self.in_g = f64(params["input_norm.gamma"].data[:, 0])
        self.in_b = f64(params["input_norm.beta"].data[:, 0])
        self.bW = f32(params["bottleneck.weight"].data[:, :, 0])
        self.bb = f32(params["bottleneck.bias"].data)
        self.W1 = f32(stack("conv1x1.weight")[:, :, :, 0])
        self.b1 = f32(stack("conv1x1.bias"))
        self.a1 = f32(stack("prelu1.alpha")[:, 0])
        self.g1 = f64(stack("norm1.gamma")[:, :, 0])
        self.be1 = f64(stack("norm1.beta")[:, :, 0])
        self.K = f64(stack("dconv.weight")[:, :, 0, :].transpose(0, 2, 1))
        self.dil = np.asarray(cfg.dilations(), dtype=np.int64)
        self.a2 = f32(stack("prelu2.alpha")[:, 0])
        self.g2 = f64(stack("norm2.gamma")[:, :, 0])
        self.be2 = f64(stack("norm2.beta")[:, :, 0])
        # residual and skip projections read the same input, so one product serves both
        self.Wrs = f32(np.concatenate([stack("residual.weight"), stack("skip.weight")], axis=1)[:, :, :, 0])
        self.brs = f32(np.concatenate([stack("residual.bias"), stack("skip.bias")], axis=1))
        self.a_out = np.float32(params["output.prelu.alpha"].data[0])
        self.Wm = f32(params["mask.weight"].data[:, :, 0])
        self.bm = f32(params["mask.bias"].data)
        self.softmax = cfg.mask == "softmax"
        self.V = f64(params["decoder.V"].data)
        self.history = (cfg.kernel - 1) * max(cfg.dilations())


class StreamState:
    """Mutable state of one stream: ring buffers, running norm statistics, overlap tail."""

    def __init__(self, weights: StreamWeights):
        cfg = weights.config
        self.weights = weights
        self.hop = cfg.hop
        self.n_sources = cfg.n_sources
        n_sites = 1 + 2 * cfg.n_blocks
        self.hist = np.zeros((cfg.n_blocks, max(weights.history, 1), cfg.block_channels), dtype=np.float32)
        self.stats = np.zeros((n_sites, 4))
        self.stats[:, 2] = np.inf
        self.stats[:, 3] = -np.inf
        self.counter = np.zeros(1, dtype=np.int64)
        self.tail = np.zeros((cfg.n_sources, self.hop))
        self.pending = np.zeros(0)
        self.prev: np.ndarray | None = None
        self.received = 0
        self.emitted = 0
        self.finished = False

    @property
    def frames(self) -> int:
        """Number of encoder frames processed so far."""
        return int(self.counter[0])

    def _empty(self) -> np.ndarray:
        return np.zeros((self.n_sources, 0))

    def _run(self, hops: np.ndarray) -> np.ndarray:
        """Consume whole hops; a frame is formed once two hops are available."""
        hop = self.hop
        if self.prev is None:
            seq = hops
            n_frames = hops.size // hop - 1
        else:
            seq = np.concatenate([self.prev, hops])
            n_frames = hops.size // hop
        self.prev = seq[-hop:].copy()
        if n_frames <= 0:
            return self._empty()
        w = self.weights
        out = np.empty((self.n_sources, n_frames * hop))
        _kernels.run_frames(
            seq, n_frames, hop, w.encT, w.relu, w.in_g, w.in_b, w.bW, w.bb,
            w.W1, w.b1, w.a1, w.g1, w.be1, w.K, w.dil, w.a2, w.g2, w.be2, w.Wrs, w.brs,
            w.a_out, w.Wm, w.bm, w.softmax, w.V,
            self.hist, self.stats, self.counter, self.tail, out,
        )
        self.emitted += out.shape[1]
        return out

    def push(self, samples) -> np.ndarray:
        """Feed samples; returns the newly available output ``[C, n]`` (n is a multiple of the hop)."""
        if self.finished:
            raise StreamError("stream has been flushed; start a new one")
        x = np.asarray(samples, dtype=self.weights.dtype).astype(np.float64).ravel()
        self.received += x.size
        data = np.concatenate([self.pending, x]) if self.pending.size else x
        n_hops = data.size // self.hop
        cut = n_hops * self.hop
        self.pending = data[cut:].copy()
        if n_hops == 0:
            return self._empty()
        return self._run(data[:cut])

    def flush(self) -> np.ndarray:
        """Zero-pad the input to a whole hop (and one full window) and emit everything left."""
        if self.finished:
            raise StreamError("stream has already been flushed")
        self.finished = True
        if self.received == 0:
            return self._empty()
        parts = []
        if self.pending.size:
            pad = np.zeros(self.hop)
            pad[: self.pending.size] = self.pending
            self.pending = np.zeros(0)
            parts.append(self._run(pad))
        if self.frames == 0:
            parts.append(self._run(np.zeros(self.hop)))
        parts.append(self.tail.copy())
        self.emitted += self.hop
        return np.concatenate(parts, axis=1)


def init_stream(params: ModelParams | StreamWeights) -> StreamState:
    """Fresh stream state; weights can be shared between streams of the same model."""
    weights = params if isinstance(params, StreamWeights) else StreamWeights(params)
    return StreamState(weights)


def push(state: StreamState, samples) -> np.ndarray:
    return state.push(samples)


def flush(state: StreamState) -> np.ndarray:
    return state.flush()


def stream_separate(params: ModelParams | StreamWeights, samples, chunk: int = 4096) -> np.ndarray:
    """Run a whole signal through a stream in chunks; returns ``[C, padded_length]``."""
    state = init_stream(params)
    samples = np.asarray(samples)
    parts = [state.push(samples[i : i + chunk]) for i in range(0, samples.size, chunk)]
    parts.append(state.flush())
    return np.concatenate(parts, axis=1)


@dataclass
class BenchReport:
    hop_ms: float
    mean_ms: float
    p95_ms: float
    trial_means_ms: list[float]
    frames: int

    @property
    def realtime(self) -> bool:
        return self.mean_ms < self.hop_ms

    def to_csv(self) -> str:
        rows = ["trial,mean_ms"]
        rows += [f"{i},{m:.6f}" for i, m in enumerate(self.trial_means_ms)]
        rows.append(f"all,{self.mean_ms:.6f}")
        rows.append(f"p95,{self.p95_ms:.6f}")
        rows.append(f"hop,{self.hop_ms:.6f}")
        return "\n".join(rows) + "\n"


def bench_tpf(params: ModelParams | StreamWeights, seconds: float = 2.0, trials: int = 3,
              warmup: int = 20, seed: int = 0) -> BenchReport:
    """Wall-clock time per frame when pushing exactly one hop at a time.

    Each trial streams ``seconds`` of noise through a fresh state; the first
    ``warmup`` frames of every trial are not timed.
    """
    weights = params if isinstance(params, StreamWeights) else StreamWeights(params)
    cfg = weights.config
    hop = cfg.hop
    n_hops = max(int(math.ceil(seconds * cfg.sample_rate / hop)), warmup + 2)
    rng = np.random.default_rng(seed)
    per_frame: list[np.ndarray] = []
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(trials):
            x = 0.1 * rng.standard_normal(n_hops * hop)
            state = init_stream(weights)
            state.push(x[:hop])
            times = np.empty(n_hops - 1)
            for i in range(1, n_hops):
                chunk = x[i * hop : (i + 1) * hop]
                t0 = time.perf_counter_ns()
                state.push(chunk)
                times[i - 1] = time.perf_counter_ns() - t0
            per_frame.append(times[warmup:] / 1e6)
    finally:
        if gc_was_enabled:
            gc.enable()
    allt = np.concatenate(per_frame)
    return BenchReport(
        hop_ms=1000.0 * hop / cfg.sample_rate,
        mean_ms=float(allt.mean()),
        p95_ms=float(np.percentile(allt, 95)),
        trial_means_ms=[float(t.mean()) for t in per_frame],
        frames=int(allt.size),
    )
