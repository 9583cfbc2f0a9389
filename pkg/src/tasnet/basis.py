"""Export of learned encoder/decoder basis functions, sorted by similarity."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import leaves_list, linkage

from .audio import atomic_write_text
from .model import ModelParams, encoder_kernel

FFT_SIZE = 256


def upgma_order(rows: np.ndarray) -> np.ndarray:
    """Leaf order of average-linkage clustering on Euclidean distance.

    Within each merge the cluster created earlier (lower id) is placed first.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] < 2:
        return np.arange(rows.shape[0])
    return leaves_list(linkage(rows, method="average", metric="euclidean"))


def basis_matrices(params: ModelParams) -> dict[str, np.ndarray]:
    cfg = params.config
    enc = encoder_kernel(params).data.reshape(cfg.n_filters, cfg.filter_len)
    return {"encoder": np.asarray(enc, dtype=np.float64),
            "decoder": np.asarray(params["decoder.V"].data, dtype=np.float64)}


def basis_table(rows: np.ndarray, fft_size: int = FFT_SIZE) -> tuple[list[str], np.ndarray, np.ndarray]:
    """``(header, sorted table, order)``; each row is the waveform then its rFFT magnitudes."""
    n_fft = max(fft_size, rows.shape[1])
    order = upgma_order(rows)
    sorted_rows = rows[order]
    mags = np.abs(np.fft.rfft(sorted_rows, n=n_fft, axis=1))
    header = [f"w{i}" for i in range(rows.shape[1])] + [f"mag{i}" for i in range(mags.shape[1])]
    return header, np.hstack([sorted_rows, mags]), order


def export_basis(params: ModelParams, out_prefix: str | os.PathLike) -> dict[str, Path]:
    """Write ``<prefix>.encoder.csv`` and ``<prefix>.decoder.csv`` (N rows each)."""
    out_prefix = Path(out_prefix)
    paths = {}
    for name, mat in basis_matrices(params).items():
        header, table, _ = basis_table(mat)
        lines = [",".join(header)]
        lines += [",".join(f"{v:.9g}" for v in row) for row in table]
        path = out_prefix.with_name(f"{out_prefix.name}.{name}.csv")
        atomic_write_text(path, "\n".join(lines) + "\n")
        paths[name] = path
    return paths
