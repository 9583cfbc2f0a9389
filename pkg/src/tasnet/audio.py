"""Mono waveform container, WAV I/O, manifests and mixture synthesis."""

from __future__ import annotations

import io
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.io import wavfile

from .errors import DataError

log = logging.getLogger(__name__)

MANIFEST_SNR_NOTE = "# snr: second source scaled relative to the first"


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError(f"AudioClip must be mono, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("AudioClip contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> AudioClip:
    """Read a mono 16-bit PCM or 32-bit float WAV file without resampling."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError as e:
        raise DataError(f"{path}: no such file") from e
    except (ValueError, EOFError) as e:
        raise DataError(f"{path}: unreadable WAV ({e})") from e
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, found {data.shape[1]} channels")
    if data.size == 0:
        raise DataError(f"{path}: file contains no samples")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype} (need PCM16 or float32)")
    return AudioClip(samples, rate)


# mkstemp creates files as 0600; written files get the usual umask-derived mode
_UMASK = os.umask(0)
os.umask(_UMASK)


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(Path(path), text.encode("utf-8"))


def write_wav(path, clip: AudioClip, fmt: str = "pcm16") -> None:
    """Write ``clip`` as PCM16 (clipped to [-1, 1)) or float32."""
    if fmt == "pcm16":
        q = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        q = clip.samples.astype(np.float32)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    buf = io.BytesIO()
    wavfile.write(buf, clip.sample_rate, q)
    _atomic_write_bytes(Path(path), buf.getvalue())


# ---------------------------------------------------------------------------
# manifests: one utterance per line, tab-separated mixture path then references


@dataclass
class ManifestEntry:
    mixture: Path
    references: list[Path]


def read_manifest(path, n_sources: int | None = None) -> list[ManifestEntry]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as e:
        raise DataError(f"{path}: manifest not found") from e
    base = path.parent
    entries = []
    for no, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise DataError(f"{path}:{no}: need a mixture and at least two reference paths")
        if n_sources is not None and len(parts) - 1 != n_sources:
            raise DataError(f"{path}:{no}: expected {n_sources} references, found {len(parts) - 1}")
        paths = [base / p for p in parts]
        entries.append(ManifestEntry(paths[0], paths[1:]))
    if not entries:
        raise DataError(f"{path}: manifest lists no utterances")
    return entries


def load_pairs(entries: Sequence[ManifestEntry], sample_rate: int | None = None):
    """Load ``(mixture, [references])`` arrays for each manifest entry."""
    pairs = []
    for e in entries:
        mix = read_wav(e.mixture)
        refs = [read_wav(r) for r in e.references]
        for clip, p in [(mix, e.mixture)] + list(zip(refs, e.references)):
            if sample_rate is not None and clip.sample_rate != sample_rate:
                raise DataError(f"{p}: sample rate {clip.sample_rate} Hz, expected {sample_rate} Hz")
        pairs.append((mix.samples, [r.samples for r in refs]))
    return pairs


def _source_pools(source_dirs: Sequence) -> list[list[Path]]:
    pools = []
    for d in source_dirs:
        files = sorted(Path(d).glob("*.wav"))
        if files:
            pools.append(files)
    return pools


def synthesize_mixtures(
    source_dirs: Sequence,
    out_dir,
    count: int,
    snr_min_db: float = -5.0,
    snr_max_db: float = 5.0,
    seed: int = 0,
    n_sources: int = 2,
    peak: float = 0.9,
) -> Path:
    """Mix utterances drawn from distinct source directories; returns the manifest path.

    Each directory stands for one speaker. For every mixture C directories are
    drawn without replacement, one file from each; the signals are cut to the
    shortest, each later source is scaled so that the first-to-it power ratio
    is uniform in ``[snr_min_db, snr_max_db]``, and everything is rescaled
    jointly to the given peak. References and mixture are written as float32
    so the mixture is exactly the sample-wise sum of the written references.
    """
    if snr_min_db > snr_max_db:
        raise DataError(f"snr range is empty: [{snr_min_db}, {snr_max_db}]")
    pools = _source_pools(source_dirs)
    if len(pools) < n_sources:
        raise DataError(f"need at least {n_sources} non-empty source directories, found {len(pools)}")
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    lines = [MANIFEST_SNR_NOTE]
    rate = None
    for i in range(count):
        which = sorted(rng.choice(len(pools), size=n_sources, replace=False))
        clips = []
        for k in which:
            f = pools[k][rng.integers(len(pools[k]))]
            clip = read_wav(f)
            if rate is None:
                rate = clip.sample_rate
            elif clip.sample_rate != rate:
                raise DataError(f"{f}: sample rate {clip.sample_rate} Hz differs from {rate} Hz")
            clips.append(clip.samples)
        n = min(c.size for c in clips)
        srcs = [c[:n].copy() for c in clips]
        p0 = np.mean(srcs[0] ** 2)
        if p0 == 0:
            raise DataError("selected source is silent")
        snrs = []
        for j in range(1, n_sources):
            snr = float(rng.uniform(snr_min_db, snr_max_db))
            pj = np.mean(srcs[j] ** 2)
            if pj == 0:
                raise DataError("selected source is silent")
            srcs[j] = srcs[j] * np.sqrt(p0 / (pj * 10 ** (snr / 10)))
            snrs.append(snr)
        g = peak / max(np.max(np.abs(np.sum(srcs, axis=0))), 1e-12)
        refs32 = [(s * g).astype(np.float32) for s in srcs]
        mix32 = refs32[0].copy()
        for r in refs32[1:]:
            mix32 = mix32 + r
        name = f"mix{i:05d}"
        rels = [f"{name}.wav"] + [f"{name}.s{j + 1}.wav" for j in range(n_sources)]
        write_wav(out_dir / rels[0], AudioClip(mix32, rate), fmt="float32")
        for rel, r in zip(rels[1:], refs32):
            write_wav(out_dir / rel, AudioClip(r, rate), fmt="float32")
        lines.append("\t".join(rels))
        log.debug("%s: sources %s, snr %s dB", name, which, ", ".join(f"{s:.2f}" for s in snrs))
    manifest = out_dir / "manifest.tsv"
    atomic_write_text(manifest, "\n".join(lines) + "\n")
    return manifest
