"""Optimization: SI-SNR objective with utterance-level PIT, Adam, clipping, LR halving."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .metrics import best_permutation, si_snr_grad, si_snr_improvement
from .model import ModelParams, forward_batch, separate
from .tensor import Tape, Tensor, make_result, mul, scale, sum_all

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    segment_seconds: float = 4.0
    lr: float = 1e-3
    lr_halve_patience: int = 3
    clip_norm: float = 5.0
    batch_size: int = 4
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        for name in ("epochs", "lr_halve_patience", "batch_size"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        for name in ("segment_seconds", "lr", "clip_norm"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if self.max_steps is not None and (not isinstance(self.max_steps, int) or self.max_steps < 1):
            raise ConfigError(f"max_steps must be a positive integer, got {self.max_steps!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown train key(s): {', '.join(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_si_snri: float
    lr: float
    seconds: float
    steps: int


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_si_snri: float = -math.inf
    best_params: ModelParams | None = None

    @property
    def lr_trace(self) -> list[float]:
        return [e.lr for e in self.epochs]

    def to_csv(self) -> str:
        rows = ["epoch,train_loss,valid_si_snri,lr,seconds,steps"]
        for e in self.epochs:
            rows.append(f"{e.epoch},{e.train_loss:.6f},{e.valid_si_snri:.6f},{e.lr:.6g},{e.seconds:.3f},{e.steps}")
        return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# objective


def pairwise_si_snr_tensor(estimates: Tensor, references: np.ndarray) -> Tensor:
    """Differentiable SI-SNR matrix ``[batch, C_est, C_ref]`` for ``[batch, C, T]`` inputs."""
    est = estimates.data.astype(np.float64)
    ref = np.asarray(references, dtype=np.float64)
    if est.shape != ref.shape or est.ndim != 3:
        raise DataError(f"estimates {est.shape} and references {ref.shape} must both be [batch, C, T]")
    val, d = si_snr_grad(est[:, :, None, :], ref[:, None, :, :])

    def bw(g):
        return ((g[..., None] * d).sum(axis=2),)

    return make_result(val.astype(estimates.dtype), (estimates,), bw)


def upit_loss_tensor(estimates: Tensor, references: np.ndarray) -> tuple[Tensor, list[tuple[int, ...]]]:
    """Batch-mean uPIT loss as a scalar tensor plus the chosen permutation per utterance."""
    scores = pairwise_si_snr_tensor(estimates, references)
    nb, c, _ = scores.shape
    select = np.zeros(scores.shape, dtype=scores.dtype)
    perms = []
    for b in range(nb):
        perm, _ = best_permutation(scores.data[b].astype(np.float64))
        perms.append(perm)
        select[b, np.arange(c), list(perm)] = 1.0 / (nb * c)
    loss = scale(sum_all(mul(scores, Tensor(select))), -1.0)
    return loss, perms


# ---------------------------------------------------------------------------
# optimizer


def clip_gradients(params: ModelParams, max_l2: float) -> float:
    """Rescale all gradients so their global L2 norm is at most ``max_l2``; returns the factor."""
    total = 0.0
    for name, t in params:
        if t.grad is None:
            continue
        g = t.grad.astype(np.float64)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter {name}")
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if norm <= max_l2:
        return 1.0
    factor = max_l2 / norm
    for _, t in params:
        if t.grad is not None:
            t.grad = (t.grad.astype(np.float64) * factor).astype(t.dtype)
    return factor


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ModelParams, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update from the gradients stored on ``params``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, t in params:
        if t.grad is None:
            continue
        g = t.grad.astype(np.float64)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        t.data = (t.data.astype(np.float64) - update).astype(t.dtype)


class PlateauHalver:
    """Halve the learning rate after ``patience`` epochs without a new best score."""

    def __init__(self, lr: float, patience: int):
        self.lr = lr
        self.patience = patience
        self.best = -math.inf
        self.stale = 0

    def update(self, score: float) -> bool:
        """Record an epoch's validation score; returns True if it is a new best."""
        if score > self.best:
            self.best = score
            self.stale = 0
            return True
        self.stale += 1
        if self.stale >= self.patience:
            self.lr /= 2.0
            self.stale = 0
        return False


def lr_schedule(scores: Sequence[float], lr: float, patience: int) -> list[float]:
    """Learning rate used in each epoch given the per-epoch validation scores."""
    sched = PlateauHalver(lr, patience)
    trace = []
    for s in scores:
        trace.append(sched.lr)
        sched.update(s)
    return trace


# ---------------------------------------------------------------------------
# data


def cut_segments(pairs, seg_len: int):
    """Non-overlapping windows of ``seg_len`` samples; short tails are dropped."""
    mixes, refs = [], []
    for mix, sources in pairs:
        mix = np.asarray(mix, dtype=np.float64)
        src = np.asarray(sources, dtype=np.float64)
        if src.shape[-1] != mix.shape[-1]:
            raise DataError("mixture and references differ in length")
        for start in range(0, mix.size - seg_len + 1, seg_len):
            mixes.append(mix[start : start + seg_len])
            refs.append(src[:, start : start + seg_len])
    return mixes, refs


def segment_length(params: ModelParams, seconds: float) -> int:
    cfg = params.config
    n = int(round(seconds * cfg.sample_rate)) // cfg.hop * cfg.hop
    return max(n, cfg.filter_len)


def train_step(params: ModelParams, state: AdamState, mixtures: np.ndarray, references: np.ndarray,
               lr: float, clip_norm: float) -> float:
    """Forward, uPIT loss, backward, clip and Adam on one batch; returns the loss."""
    params.requires_grad_(True)
    params.zero_grad()
    x = Tensor(np.asarray(mixtures, dtype=params.dtype)[:, None, :])
    with Tape() as tape:
        est = forward_batch(params, x)
        loss, _ = upit_loss_tensor(est, references)
    value = loss.item()
    if not math.isfinite(value):
        raise NumericError("training loss is not finite")
    tape.backward(loss)
    clip_gradients(params, clip_norm)
    adam_step(params, state, lr)
    params.zero_grad()
    params.requires_grad_(False)
    return value


def mean_si_snri(params: ModelParams, pairs) -> float:
    vals = []
    for mix, refs in pairs:
        est = separate(params, mix)
        vals.append(si_snr_improvement(est, refs, mix)[0])
    return float(np.mean(vals))


def fit(params: ModelParams, train_set, valid_set, tc: TrainConfig,
        on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainReport:
    """Train ``params`` in place; the report carries a copy of the best-validation parameters."""
    seg = segment_length(params, tc.segment_seconds)
    mixes, refs = cut_segments(train_set, seg)
    if not mixes:
        raise DataError(f"training set yields no {tc.segment_seconds}-second segments")
    if not valid_set:
        raise DataError("validation set is empty")
    rng = np.random.default_rng(tc.seed)
    state = AdamState()
    sched = PlateauHalver(tc.lr, tc.lr_halve_patience)
    report = TrainReport()
    steps = 0
    for epoch in range(1, tc.epochs + 1):
        t0 = time.perf_counter()
        lr = sched.lr
        order = rng.permutation(len(mixes))
        losses = []
        for start in range(0, len(order), tc.batch_size):
            idx = order[start : start + tc.batch_size]
            batch_mix = np.stack([mixes[i] for i in idx])
            batch_ref = np.stack([refs[i] for i in idx])
            losses.append(train_step(params, state, batch_mix, batch_ref, lr, tc.clip_norm))
            steps += 1
            if tc.max_steps is not None and steps >= tc.max_steps:
                break
        score = mean_si_snri(params, valid_set)
        rec = EpochRecord(epoch, float(np.mean(losses)), score, lr, time.perf_counter() - t0, steps)
        report.epochs.append(rec)
        if sched.update(score):
            report.best_epoch = epoch
            report.best_valid_si_snri = score
            report.best_params = params.copy()
        log.info("epoch %d loss %.4f valid SI-SNRi %.3f dB lr %.3g", epoch, rec.train_loss, score, lr)
        if on_epoch is not None:
            on_epoch(rec)
        if tc.max_steps is not None and steps >= tc.max_steps:
            break
    return report
