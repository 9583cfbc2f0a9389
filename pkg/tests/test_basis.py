import csv

import numpy as np
import pytest

from conftest import MICRO
from helpers import naive_upgma
from tasnet.basis import basis_matrices, basis_table, export_basis, upgma_order
from tasnet.model import build, encoder_kernel


def test_three_point_example():
    # d(A,B)=1, d(A,C)=d(B,C)=4
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(15.75)]])
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    assert d[0, 1] == pytest.approx(1.0) and d[0, 2] == pytest.approx(4.0) and d[1, 2] == pytest.approx(4.0)
    order = list(upgma_order(pts))
    # A and B merge first, so they are adjacent; the singleton C (id 2) precedes
    # the merged cluster (id 3) under the lower-id-first convention
    assert order == [2, 0, 1]
    assert order == list(naive_upgma(pts))
    assert abs(order.index(0) - order.index(1)) == 1


@pytest.mark.parametrize("seed", range(6))
def test_matches_naive_average_linkage(seed):
    rows = np.random.default_rng(seed).standard_normal((8, 5))
    np.testing.assert_array_equal(upgma_order(rows), naive_upgma(rows))


def test_order_is_a_permutation():
    rows = np.random.default_rng(0).standard_normal((30, 4))
    assert sorted(upgma_order(rows)) == list(range(30))
    assert list(upgma_order(rows[:1])) == [0]


def test_table_layout():
    rows = np.random.default_rng(1).standard_normal((6, 16))
    header, table, order = basis_table(rows)
    assert table.shape == (6, 16 + 129)
    assert header[0] == "w0" and header[15] == "w15" and header[16] == "mag0" and header[-1] == "mag128"
    np.testing.assert_array_equal(table[:, :16], rows[order])
    np.testing.assert_allclose(table[:, 16:], np.abs(np.fft.rfft(rows[order], n=256, axis=1)))


def test_export_files(tmp_path):
    params = build(MICRO, seed=0)
    paths = export_basis(params, tmp_path / "basis")
    assert paths["encoder"].name == "basis.encoder.csv" and paths["decoder"].name == "basis.decoder.csv"
    for name, path in paths.items():
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + MICRO.n_filters
        assert all(len(r) == MICRO.filter_len + 129 for r in rows)
    enc = basis_matrices(params)["encoder"]
    np.testing.assert_array_equal(enc, encoder_kernel(params).data.reshape(8, 4).astype(np.float64))
