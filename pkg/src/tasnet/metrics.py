"""Separation metrics: SI-SNR, a simplified SDR, and permutation search."""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .errors import DataError

SI_SNR_CAP = 60.0
TINY = 1e-10
_DB = 10.0 / math.log(10.0)


def _zero_mean(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=-1, keepdims=True)


def si_snr_terms(estimate: np.ndarray, reference: np.ndarray):
    """Intermediate quantities of SI-SNR along the last axis.

    Returns ``(est0, ref0, alpha, noise, p_target, p_noise, guard)``. The
    guard is ``TINY`` times the estimate power, which keeps the ratio finite
    at perfect reconstruction without breaking scale invariance.
    """
    est = np.asarray(estimate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if est.shape[-1] != ref.shape[-1]:
        raise DataError(f"si_snr: length mismatch {est.shape[-1]} vs {ref.shape[-1]}")
    if est.shape[-1] < 2:
        raise DataError("si_snr needs at least two samples")
    est0, ref0 = _zero_mean(est), _zero_mean(ref)
    rr = (ref0 * ref0).sum(axis=-1)
    if np.any(rr == 0):
        raise DataError("si_snr: reference has zero power after mean removal")
    alpha = (est0 * ref0).sum(axis=-1) / rr
    noise = est0 - alpha[..., None] * ref0
    p_target = alpha * alpha * rr
    p_noise = (noise * noise).sum(axis=-1)
    guard = TINY * (est0 * est0).sum(axis=-1)
    return est0, ref0, alpha, noise, p_target, p_noise, guard


def _ratio_db(p_target, p_noise, guard):
    num = p_target + guard
    den = p_noise + guard
    with np.errstate(divide="ignore", invalid="ignore"):
        val = _DB * np.log(num / den)
    # a silent estimate has no defined ratio; report the floor
    floor = _DB * math.log(TINY / (1.0 + TINY))
    val = np.where(den > 0, val, floor)
    return np.minimum(val, SI_SNR_CAP)


def si_snr(estimate, reference) -> float | np.ndarray:
    """Scale-invariant SNR in dB, capped at +60 dB."""
    _, _, _, _, pt, pn, g = si_snr_terms(estimate, reference)
    out = _ratio_db(pt, pn, g)
    return float(out) if np.ndim(out) == 0 else out


def si_snr_grad(estimate: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(value, d value / d estimate)`` along the last axis; zero gradient where capped."""
    est0, ref0, alpha, noise, pt, pn, g = si_snr_terms(estimate, reference)
    val = _ratio_db(pt, pn, g)
    num = (pt + g)[..., None]
    den = (pn + g)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 2.0 * _DB * ((alpha[..., None] * ref0 + TINY * est0) / num - (noise + TINY * est0) / den)
    active = ((val < SI_SNR_CAP) & (pn + g > 0))[..., None]
    d = np.where(active, d, 0.0)
    return val, _zero_mean(d)


def sdr(estimate, reference) -> float:
    """Plain signal-to-distortion ratio ``||s||^2 / ||s_hat - s||^2`` on zero-mean signals.

    No projection or allowed-distortion filtering is applied, so values are
    not comparable with BSS-eval SDR.
    """
    est = _zero_mean(np.asarray(estimate, dtype=np.float64))
    ref = _zero_mean(np.asarray(reference, dtype=np.float64))
    if est.shape != ref.shape:
        raise DataError(f"sdr: shape mismatch {est.shape} vs {ref.shape}")
    ps = float((ref * ref).sum())
    if ps == 0:
        raise DataError("sdr: reference has zero power")
    pe = float(((est - ref) ** 2).sum())
    return min(_DB * math.log(ps / (pe + TINY * ps)), SI_SNR_CAP)


def best_permutation(scores: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Permutation maximizing ``mean_i scores[i, perm[i]]``.

    ``scores[i, j]`` rates estimate ``i`` against reference ``j``. Ties keep
    the lexicographically smallest permutation.
    """
    c = scores.shape[0]
    if scores.shape != (c, c):
        raise DataError(f"score matrix must be square, got {scores.shape}")
    if c > 8:
        raise DataError(f"permutation search supports at most 8 sources, got {c}")
    best, best_val = None, -math.inf
    rows = np.arange(c)
    for perm in itertools.permutations(range(c)):
        val = float(scores[rows, list(perm)].mean())
        if val > best_val:
            best, best_val = perm, val
    return best, best_val


def pairwise_si_snr(estimates: Sequence, references: Sequence) -> np.ndarray:
    est = np.asarray(estimates, dtype=np.float64)
    ref = np.asarray(references, dtype=np.float64)
    if est.shape != ref.shape:
        raise DataError(f"estimates {est.shape} and references {ref.shape} differ in shape")
    return si_snr(est[:, None, :], ref[None, :, :])


def upit_loss(estimates: Sequence, references: Sequence) -> tuple[float, tuple[int, ...]]:
    """Negative mean SI-SNR under the best assignment of estimates to references.

    Returns ``(loss, perm)`` where estimate ``i`` is paired with reference
    ``perm[i]``.
    """
    scores = np.atleast_2d(pairwise_si_snr(estimates, references))
    perm, val = best_permutation(scores)
    return -val, perm


def si_snr_improvement(estimates, references, mixture) -> tuple[float, float, tuple[int, ...]]:
    """Mean SI-SNRi and SDRi under the permutation chosen by SI-SNR.

    Returns ``(si_snri, sdri, perm)``.
    """
    scores = np.atleast_2d(pairwise_si_snr(estimates, references))
    perm, _ = best_permutation(scores)
    mix = np.asarray(mixture, dtype=np.float64)
    si, sd = [], []
    for i, j in enumerate(perm):
        ref = references[j]
        si.append(si_snr(estimates[i], ref) - si_snr(mix, ref))
        sd.append(sdr(estimates[i], ref) - sdr(mix, ref))
    return float(np.mean(si)), float(np.mean(sd)), perm
