"""Synthetic speech-like sources for demos and tests.

Each "speaker" is a harmonic source with its own pitch range and spectral
tilt, amplitude-modulated at a syllabic rate so that sources overlap only
partially in time and frequency.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio import AudioClip, write_wav


def speaker_profile(rng: np.random.Generator) -> dict:
    return {
        "f0": float(rng.uniform(90.0, 260.0)),
        "tilt": float(rng.uniform(0.6, 1.6)),
        "rate": float(rng.uniform(2.5, 6.0)),
        "noise": float(rng.uniform(0.0, 0.15)),
    }


def harmonic_source(rng: np.random.Generator, n: int, sample_rate: int = 8000,
                    profile: dict | None = None) -> np.ndarray:
    """Voiced-speech-like waveform of ``n`` samples with peak near 0.5."""
    p = profile or speaker_profile(rng)
    t = np.arange(n) / sample_rate
    # slow pitch drift around the speaker's f0
    drift = 1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.3, 1.2) * t + rng.uniform(0, 2 * np.pi))
    f0 = p["f0"] * drift
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    x = np.zeros(n)
    nyq = sample_rate / 2
    for h in range(1, 40):
        if h * p["f0"] * 1.1 >= nyq:
            break
        amp = h ** (-p["tilt"]) * (0.5 + rng.random())
        x += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    x += p["noise"] * rng.standard_normal(n)
    env = 0.5 * (1 + np.sin(2 * np.pi * p["rate"] * t + rng.uniform(0, 2 * np.pi)))
    x *= 0.15 + 0.85 * env**2
    return 0.5 * x / max(np.max(np.abs(x)), 1e-12)


def write_source_corpus(out_dir, n_speakers: int = 4, per_speaker: int = 3,
                        seconds: float = 1.0, sample_rate: int = 8000, seed: int = 0) -> list[Path]:
    """Write ``n_speakers`` directories of synthetic utterances; returns the directories."""
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    dirs = []
    n = int(round(seconds * sample_rate))
    for s in range(n_speakers):
        prof = speaker_profile(rng)
        d = out_dir / f"spk{s:02d}"
        for u in range(per_speaker):
            x = harmonic_source(rng, n, sample_rate, prof)
            write_wav(d / f"utt{u:02d}.wav", AudioClip(x, sample_rate), fmt="float32")
        dirs.append(d)
    return dirs


def random_mixtures(count: int, n: int, sample_rate: int = 8000, n_sources: int = 2, seed: int = 0):
    """In-memory ``(mixture, [references])`` pairs from distinct synthetic speakers."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        refs = [harmonic_source(rng, n, sample_rate) for _ in range(n_sources)]
        refs = [r.astype(np.float32).astype(np.float64) for r in refs]
        pairs.append((np.sum(refs, axis=0), refs))
    return pairs
