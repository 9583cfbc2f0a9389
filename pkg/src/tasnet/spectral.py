"""Short-time Fourier analysis and ideal time-frequency mask oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .errors import DataError

WIN_LENGTH = 256  # 32 ms at 8 kHz
HOP_LENGTH = 64  # 8 ms at 8 kHz
MASK_KINDS = ("ibm", "irm", "wfm")


def hann(n: int = WIN_LENGTH) -> np.ndarray:
    return get_window("hann", n, fftbins=True)


@dataclass
class Spectrogram:
    """Complex STFT frames ``[F, Tf]`` plus what is needed to invert them."""

    frames: np.ndarray
    n_samples: int
    sample_rate: int = 8000
    win_length: int = WIN_LENGTH
    hop_length: int = HOP_LENGTH

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape


def _samples(x) -> tuple[np.ndarray, int]:
    if hasattr(x, "samples"):
        return np.asarray(x.samples, dtype=np.float64), x.sample_rate
    return np.asarray(x, dtype=np.float64), 8000


def stft(clip, win_length: int = WIN_LENGTH, hop_length: int = HOP_LENGTH) -> Spectrogram:
    """Hann-windowed STFT.

    The signal is padded with ``win_length - hop_length`` zeros on both sides
    (and at the end up to a whole hop) so that every real sample lies under the
    same number of windows; this keeps the overlap-add normalization well away
    from zero even for masked spectra.
    """
    x, rate = _samples(clip)
    if x.ndim != 1 or x.size < win_length:
        raise DataError(f"stft needs a mono signal of at least {win_length} samples, got {x.shape}")
    pad = win_length - hop_length
    n_frames = 1 + -(-(x.size + pad) // hop_length)
    padded = np.zeros((n_frames - 1) * hop_length + win_length)
    padded[pad : pad + x.size] = x
    idx = np.arange(win_length)[None, :] + hop_length * np.arange(n_frames)[:, None]
    frames = np.fft.rfft(padded[idx] * hann(win_length), axis=1).T
    return Spectrogram(frames, x.size, rate, win_length, hop_length)


def istft(spec: Spectrogram):
    """Weighted overlap-add inverse normalized by the summed squared window."""
    from .audio import AudioClip

    n, hop = spec.win_length, spec.hop_length
    w = hann(n)
    n_frames = spec.frames.shape[1]
    total = (n_frames - 1) * hop + n
    segs = np.fft.irfft(spec.frames.T, n=n, axis=1) * w
    out = np.zeros(total)
    norm = np.zeros(total)
    for f in range(n_frames):
        out[f * hop : f * hop + n] += segs[f]
        norm[f * hop : f * hop + n] += w * w
    good = norm > 1e-10
    out[good] /= norm[good]
    out[~good] = 0.0
    pad = n - hop
    return AudioClip(out[pad : pad + spec.n_samples], spec.sample_rate)


def ideal_masks(kind: str, magnitudes: np.ndarray) -> np.ndarray:
    """Masks ``[C, F, Tf]`` from clean-source magnitude spectrograms ``[C, F, Tf]``.

    Ratio masks use 1/C at bins where every source is silent so the unit-sum
    property holds everywhere; the binary mask gives ties to the lower index.
    """
    kind = kind.lower()
    c = magnitudes.shape[0]
    if kind == "ibm":
        winner = np.argmax(magnitudes, axis=0)
        return (np.arange(c)[:, None, None] == winner[None]).astype(np.float64)
    if kind == "irm":
        num = magnitudes
    elif kind == "wfm":
        num = magnitudes**2
    else:
        raise ValueError(f"unknown ideal mask {kind!r}; expected one of {MASK_KINDS}")
    den = num.sum(axis=0, keepdims=True)
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, num / safe, 1.0 / c)


def ideal_mask(kind: str, sources):
    """Oracle separation of ``sum(sources)`` with an ideal mask computed from the sources.

    Returns ``(masks, clips)``: ``masks`` is ``[C, F, Tf]`` and each clip is
    ``istft(mask_i * stft(mixture))`` using the mixture phase.
    """
    arrays = []
    rate = 8000
    for s in sources:
        x, rate = _samples(s)
        arrays.append(x)
    if len({a.size for a in arrays}) != 1:
        raise DataError("ideal_mask: sources must have equal length")
    if all(not np.any(a) for a in arrays):
        raise DataError("ideal_mask: all sources are silent")
    specs = [stft(a) for a in arrays]
    mags = np.stack([np.abs(s.frames) for s in specs])
    masks = ideal_masks(kind, mags)
    mix_spec = stft(np.sum(arrays, axis=0))
    clips = []
    for m in masks:
        spec = Spectrogram(m * mix_spec.frames, mix_spec.n_samples, rate)
        clips.append(istft(spec))
    return masks, clips
