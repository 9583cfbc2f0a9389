"""PNG figures written next to the CSV reports (non-interactive backend)."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.png")
    fig.savefig(tmp, dpi=110, bbox_inches="tight", metadata={"Software": None})
    os.replace(tmp, path)
    return path


def plot_basis(tables: dict[str, np.ndarray], filter_len: int, path) -> Path:
    """Sorted waveforms and their magnitude responses, one column per matrix."""
    plt = _pyplot()
    fig, axes = plt.subplots(2, len(tables), figsize=(4.5 * len(tables), 7), squeeze=False)
    for col, (name, table) in enumerate(tables.items()):
        waves, mags = table[:, :filter_len], table[:, filter_len:]
        lim = np.abs(waves).max() or 1.0
        axes[0, col].imshow(waves, aspect="auto", cmap="RdBu_r", vmin=-lim, vmax=lim, interpolation="nearest")
        axes[0, col].set_title(f"{name} basis (sorted)")
        axes[0, col].set_xlabel("tap")
        axes[0, col].set_ylabel("filter")
        axes[1, col].imshow(mags, aspect="auto", cmap="magma", interpolation="nearest")
        axes[1, col].set_xlabel("frequency bin")
        axes[1, col].set_ylabel("filter")
    return _save(fig, path)


def plot_training(report, path) -> Path:
    plt = _pyplot()
    ep = [e.epoch for e in report.epochs]
    fig, ax = plt.subplots(1, 2, figsize=(10, 3.5))
    ax[0].plot(ep, [e.train_loss for e in report.epochs], marker="o")
    ax[0].set_xlabel("epoch")
    ax[0].set_ylabel("training loss (-SI-SNR, dB)")
    ax[1].plot(ep, [e.valid_si_snri for e in report.epochs], marker="o")
    ax[1].set_xlabel("epoch")
    ax[1].set_ylabel("validation SI-SNRi (dB)")
    return _save(fig, path)


def plot_scores(report, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    si = [s.si_snri for s in report.scores]
    sd = [s.sdri for s in report.scores]
    x = np.arange(len(si))
    ax.bar(x - 0.2, si, width=0.4, label="SI-SNRi")
    ax.bar(x + 0.2, sd, width=0.4, label="SDRi")
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("utterance")
    ax.set_ylabel("dB")
    ax.legend()
    return _save(fig, path)


def plot_shift(report, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(report.shifts, report.sdri, marker="o", label="SDRi")
    ax.plot(report.shifts, report.si_snri, marker="s", label="SI-SNRi")
    ax.set_xlabel("input shift (samples)")
    ax.set_ylabel("dB")
    ax.set_title(f"SDRi std = {report.std_sdri:.3f} dB")
    ax.legend()
    return _save(fig, path)


def plot_bench(report, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(np.arange(len(report.trial_means_ms)), report.trial_means_ms)
    ax.axhline(report.hop_ms, color="r", ls="--", label="hop duration")
    ax.set_xlabel("trial")
    ax.set_ylabel("mean time per frame (ms)")
    ax.legend()
    return _save(fig, path)
