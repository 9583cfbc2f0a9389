"""Corpus evaluation, ideal-mask oracle separators and the input-shift experiment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .audio import ManifestEntry, read_wav
from .errors import DataError
from .metrics import si_snr_improvement
from .model import ModelParams, separate
from .spectral import MASK_KINDS, ideal_mask

log = logging.getLogger(__name__)

# separator(mixture [T], references [C][T]) -> estimates [C, T]; models ignore the references
Separator = Callable[[np.ndarray, Sequence[np.ndarray]], np.ndarray]


def model_separator(params: ModelParams, streaming: bool = False, chunk: int = 4096) -> Separator:
    if streaming:
        from .streaming import StreamWeights, stream_separate

        weights = StreamWeights(params)

        def run(mix, refs):
            return stream_separate(weights, mix, chunk)[:, : np.asarray(mix).size]
    else:

        def run(mix, refs):
            return separate(params, mix)

    return run


def mask_invariants_hold(kind: str, masks: np.ndarray, atol: float = 1e-12) -> bool:
    """Ratio masks sum to one over sources; the binary mask is one-hot at every bin."""
    if kind == "ibm":
        binary = np.all((masks == 0) | (masks == 1))
        return bool(binary and np.all(masks.sum(axis=0) == 1))
    return bool(np.all(np.abs(masks.sum(axis=0) - 1.0) <= atol))


class OracleSeparator:
    """Separates with an ideal T-F mask computed from the clean references."""

    def __init__(self, kind: str):
        kind = kind.lower()
        if kind not in MASK_KINDS:
            raise ValueError(f"unknown oracle {kind!r}; expected one of {', '.join(MASK_KINDS)}")
        self.kind = kind
        self.checked = 0
        self.violations = 0

    def __call__(self, mix, refs) -> np.ndarray:
        masks, clips = ideal_mask(self.kind, refs)
        self.checked += 1
        if not mask_invariants_hold(self.kind, masks):
            self.violations += 1
        return np.stack([c.samples for c in clips])

    @property
    def invariant_status(self) -> str:
        return "pass" if self.violations == 0 else f"fail ({self.violations}/{self.checked})"


@dataclass
class UtteranceScore:
    name: str
    si_snri: float
    sdri: float
    perm: tuple[int, ...]


@dataclass
class EvalReport:
    scores: list[UtteranceScore] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def mean_si_snri(self) -> float:
        return float(np.mean([s.si_snri for s in self.scores])) if self.scores else float("nan")

    @property
    def mean_sdri(self) -> float:
        return float(np.mean([s.sdri for s in self.scores])) if self.scores else float("nan")

    def to_csv(self) -> str:
        rows = ["utterance,si_snri_db,sdri_db,permutation"]
        for s in self.scores:
            rows.append(f"{s.name},{s.si_snri:.6f},{s.sdri:.6f},{'-'.join(map(str, s.perm))}")
        rows.append(f"mean,{self.mean_si_snri:.6f},{self.mean_sdri:.6f},")
        rows.append(f"skipped,{len(self.skipped)},,")
        return "\n".join(rows) + "\n"


def evaluate(utterances, separator: Separator, sample_rate: int | None = None) -> EvalReport:
    """Score a separator on manifest entries or in-memory ``(mixture, references)`` pairs.

    Utterances whose references or estimates disagree in length with the
    mixture are skipped with a warning and listed in the report.
    """
    report = EvalReport()
    for i, item in enumerate(utterances):
        if isinstance(item, ManifestEntry):
            name = Path(item.mixture).stem
            mclip = read_wav(item.mixture)
            rclips = [read_wav(r) for r in item.references]
            for c in [mclip] + rclips:
                if sample_rate is not None and c.sample_rate != sample_rate:
                    raise DataError(f"{name}: sample rate {c.sample_rate} Hz, expected {sample_rate} Hz")
            mix, refs = mclip.samples, [c.samples for c in rclips]
        else:
            name = f"utt{i:05d}"
            mix, refs = item
            mix = np.asarray(mix, dtype=np.float64)
            refs = [np.asarray(r, dtype=np.float64) for r in refs]
        if any(r.size != mix.size for r in refs):
            log.warning("%s: reference lengths %s differ from mixture length %d; skipped",
                        name, [r.size for r in refs], mix.size)
            report.skipped.append((name, "reference length mismatch"))
            continue
        est = np.asarray(separator(mix, refs))
        if est.shape != (len(refs), mix.size):
            log.warning("%s: separator returned %s, expected %s; skipped", name, est.shape, (len(refs), mix.size))
            report.skipped.append((name, "estimate shape mismatch"))
            continue
        si, sd, perm = si_snr_improvement(est, refs, mix)
        report.scores.append(UtteranceScore(name, si, sd, perm))
    return report


@dataclass
class ShiftReport:
    shifts: list[int]
    sdri: list[float]
    si_snri: list[float]

    @property
    def std_sdri(self) -> float:
        return float(np.std(self.sdri))

    def to_csv(self) -> str:
        rows = ["shift,sdri_db,si_snri_db"]
        rows += [f"{s},{d:.6f},{q:.6f}" for s, d, q in zip(self.shifts, self.sdri, self.si_snri)]
        return "\n".join(rows) + "\n"


def shift_experiment(separator: Separator, mixture, references, max_shift: int, step: int) -> ShiftReport:
    """Drop the first ``s`` samples for s = 0, step, ..., max_shift and score each run."""
    mix = np.asarray(mixture, dtype=np.float64)
    refs = [np.asarray(r, dtype=np.float64) for r in references]
    if step < 1:
        raise ValueError(f"step must be positive, got {step}")
    if max_shift < 0 or max_shift >= mix.size:
        raise DataError(f"max_shift must lie in [0, {mix.size}), got {max_shift}")
    shifts, sdris, sis = [], [], []
    for s in range(0, max_shift + 1, step):
        m = mix[s:]
        r = [x[s:] for x in refs]
        est = np.asarray(separator(m, r))
        si, sd, _ = si_snr_improvement(est, r, m)
        shifts.append(s)
        sdris.append(sd)
        sis.append(si)
    return ShiftReport(shifts, sdris, sis)
