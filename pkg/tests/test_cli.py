import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tasnet import checkpoint
from tasnet.audio import AudioClip, read_manifest, read_wav, write_wav
from tasnet.cli import main
from tasnet.model import ModelConfig, build

TINY_MODEL = dict(n_filters=32, filter_len=16, bottleneck=32, skip_channels=32, block_channels=64,
                  kernel=3, blocks_per_repeat=4, repeats=2, causal=True)


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--out-dir", root / "src", "--speakers", 4, "--per-speaker", 3, "--seconds", 0.5) == 0
    assert run("mix", "--sources", root / "src", "--out-dir", root / "train", "--count", 8, "--seed", 1) == 0
    assert run("mix", "--sources", root / "src", "--out-dir", root / "valid", "--count", 2, "--seed", 2) == 0
    cfg = {"model": TINY_MODEL, "train": {"epochs": 12, "segment_seconds": 0.25, "batch_size": 4, "seed": 0}}
    (root / "run.json").write_text(json.dumps(cfg))
    code = run("train", "--config", root / "run.json", "--train-manifest", root / "train/manifest.tsv",
               "--valid-manifest", root / "valid/manifest.tsv", "--out", root / "model.ckpt")
    assert code == 0
    return root


def test_train_outputs(work):
    params = checkpoint.load(work / "model.ckpt")
    assert params.config == ModelConfig(**TINY_MODEL)
    rows = read_csv(work / "model.train.csv")
    assert rows[0][:3] == ["epoch", "train_loss", "valid_si_snri"] and len(rows) == 13
    assert (work / "model.train.png").stat().st_size > 0


def test_train_seed_is_deterministic(work, tmp_path):
    cfg = {"model": TINY_MODEL, "train": {"epochs": 1, "segment_seconds": 0.25}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    losses = []
    for name in ("a", "b"):
        assert run("train", "--config", tmp_path / "c.json", "--train-manifest", work / "train/manifest.tsv",
                   "--valid-manifest", work / "valid/manifest.tsv", "--out", tmp_path / f"{name}.ckpt",
                   "--seed", 3) == 0
        losses.append(read_csv(tmp_path / f"{name}.train.csv")[1][1])
    assert losses[0] == losses[1]


def test_trained_model_improves_on_training_set(work, tmp_path):
    assert run("evaluate", "--model", work / "model.ckpt", "--manifest", work / "train/manifest.tsv",
               "--report", tmp_path / "ev.csv") == 0
    rows = read_csv(tmp_path / "ev.csv")
    mean = [r for r in rows if r[0] == "mean"][0]
    assert float(mean[1]) > 0
    assert (tmp_path / "ev.png").exists()


def test_evaluate_report_is_byte_stable(work, tmp_path):
    for name in ("a", "b"):
        assert run("evaluate", "--model", work / "model.ckpt", "--manifest", work / "valid/manifest.tsv",
                   "--report", tmp_path / f"{name}.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_separate_and_streaming(work, tmp_path):
    entry = read_manifest(work / "valid/manifest.tsv")[0]
    n = len(read_wav(entry.mixture))
    assert run("separate", "--model", work / "model.ckpt", "--input", entry.mixture,
               "--out-prefix", tmp_path / "off") == 0
    assert run("separate", "--model", work / "model.ckpt", "--input", entry.mixture,
               "--out-prefix", tmp_path / "str", "--streaming", "--chunk", 7) == 0
    for i in (1, 2):
        a, b = read_wav(tmp_path / f"off.{i}.wav"), read_wav(tmp_path / f"str.{i}.wav")
        assert len(a) == len(b) == n
        assert np.max(np.abs(a.samples - b.samples)) < 1e-4
    assert not (tmp_path / "off.3.wav").exists()


def test_separate_rate_mismatch(work, tmp_path):
    write_wav(tmp_path / "hi.wav", AudioClip(np.zeros(1600), 16000))
    assert run("separate", "--model", work / "model.ckpt", "--input", tmp_path / "hi.wav",
               "--out-prefix", tmp_path / "x") == 3


def test_oracle_commands(work, tmp_path, capsys):
    assert run("evaluate", "--oracle", "irm", "--manifest", work / "valid/manifest.tsv",
               "--report", tmp_path / "irm.csv") == 0
    assert "mask invariants (irm): pass" in capsys.readouterr().out
    assert run("oracle", "--manifest", work / "valid/manifest.tsv", "--report-prefix", tmp_path / "or") == 0
    for kind in ("ibm", "irm", "wfm"):
        assert (tmp_path / f"or.{kind}.csv").exists() and (tmp_path / f"or.{kind}.png").exists()
    assert run("evaluate", "--oracle", "xyz", "--manifest", work / "valid/manifest.tsv",
               "--report", tmp_path / "z.csv") == 2


def test_bench_output(work, tmp_path, capsys):
    assert run("bench", "--model", work / "model.ckpt", "--seconds", 0.1, "--trials", 2,
               "--report", tmp_path / "b.csv") == 0
    out = capsys.readouterr().out
    assert "hop: 1.0 ms" in out
    assert "per-trial means (ms):" in out
    verdict = "real-time" if "verdict: real-time" in out else "not real-time"
    mean = float(out.split("mean TPF: ")[1].split()[0])
    assert (verdict == "real-time") == (mean < 1.0)
    assert (tmp_path / "b.png").exists()


def test_bench_rejects_noncausal(tmp_path):
    checkpoint.save(build(ModelConfig(**{**TINY_MODEL, "causal": False}), seed=0), tmp_path / "nc.ckpt")
    assert run("bench", "--model", tmp_path / "nc.ckpt") == 2


def test_inspect(work, tmp_path):
    assert run("inspect", "--model", work / "model.ckpt", "--out-prefix", tmp_path / "basis") == 0
    for part in ("encoder", "decoder"):
        rows = read_csv(tmp_path / f"basis.{part}.csv")
        assert len(rows) == 1 + 32 and len(rows[0]) == 16 + 129
    assert (tmp_path / "basis.basis.png").exists()


def test_shift_test_rows(work, tmp_path):
    assert run("shift-test", "--model", work / "model.ckpt", "--manifest", work / "valid/manifest.tsv",
               "--max-shift", 64, "--step", 8, "--report", tmp_path / "s.csv") == 0
    assert len(read_csv(tmp_path / "s.csv")) == 1 + 9
    assert (tmp_path / "s.png").exists()
    assert run("shift-test", "--model", work / "model.ckpt", "--manifest", work / "valid/manifest.tsv",
               "--index", 5, "--report", tmp_path / "t.csv") == 3


def test_mix_zero_db(work, tmp_path):
    assert run("mix", "--sources", work / "src", "--out-dir", tmp_path, "--count", 2,
               "--snr-min", 0, "--snr-max", 0) == 0
    for e in read_manifest(tmp_path / "manifest.tsv"):
        p = [np.mean(read_wav(r).samples ** 2) for r in e.references]
        assert abs(p[0] - p[1]) <= 1e-6 * max(p)


def test_init_command(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"model": {"n_filters": 16, "filter_len": 8}}))
    assert run("init", "--config", tmp_path / "c.json", "--out", tmp_path / "i.ckpt") == 0
    assert checkpoint.load(tmp_path / "i.ckpt").config.n_filters == 16


def test_exit_codes(work, tmp_path):
    assert run() == 2
    assert run("separate") == 2
    (tmp_path / "bad.json").write_text(json.dumps({"model": {"n_filterz": 3}}))
    assert run("init", "--config", tmp_path / "bad.json", "--out", tmp_path / "x.ckpt") == 2
    assert run("evaluate", "--model", tmp_path / "none.ckpt", "--manifest", work / "valid/manifest.tsv",
               "--report", tmp_path / "r.csv") == 3
    assert run("evaluate", "--oracle", "irm", "--manifest", tmp_path / "none.tsv",
               "--report", tmp_path / "r.csv") == 3
    (tmp_path / "junk.ckpt").write_bytes(b"CTN1junk")
    assert run("bench", "--model", tmp_path / "junk.ckpt") == 3


def test_nan_weights_give_numeric_exit(work, tmp_path):
    params = build(ModelConfig(**TINY_MODEL), seed=0)
    params["decoder.V"].data[:] = np.nan
    checkpoint.save(params, tmp_path / "nan.ckpt")
    cfg = {"model": TINY_MODEL, "train": {"epochs": 1, "segment_seconds": 0.25}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run("train", "--config", tmp_path / "c.json", "--init", tmp_path / "nan.ckpt",
               "--train-manifest", work / "train/manifest.tsv", "--valid-manifest", work / "valid/manifest.tsv",
               "--out", tmp_path / "o.ckpt") == 4


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tasnet.cli", "bench", "--model", tmp_path / "missing"],
                          capture_output=True, text=True)
    assert proc.returncode == 3 and "error:" in proc.stderr
