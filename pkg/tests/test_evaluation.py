import logging

import numpy as np
import pytest

from conftest import MICRO, MICRO_CAUSAL
from tasnet.audio import AudioClip, read_manifest, write_wav
from tasnet.evaluation import (
    OracleSeparator,
    evaluate,
    mask_invariants_hold,
    model_separator,
    shift_experiment,
)
from tasnet.metrics import SI_SNR_CAP, si_snr, si_snr_improvement
from tasnet.model import build, separate
from tasnet.synth import random_mixtures


def mixture_sep(mix, refs):
    return np.stack([mix] * len(refs))


def reference_sep(mix, refs):
    return np.stack(refs)


@pytest.fixture(scope="module")
def pairs():
    return random_mixtures(4, 2400, seed=3)


def test_mixture_estimate_scores_zero(pairs):
    rep = evaluate(pairs, mixture_sep)
    assert all(s.si_snri == 0.0 and s.sdri == 0.0 for s in rep.scores)
    assert rep.mean_si_snri == 0.0


def test_reference_estimate_scores_cap_minus_mixture(pairs):
    rep = evaluate(pairs, reference_sep)
    for s, (mix, refs) in zip(rep.scores, pairs):
        expected = np.mean([SI_SNR_CAP - si_snr(mix, r) for r in refs])
        assert abs(s.si_snri - expected) < 1e-9
        assert s.perm == (0, 1)


def test_length_mismatch_is_skipped_and_counted(pairs, caplog):
    bad = (pairs[0][0], [pairs[0][1][0], pairs[0][1][1][:-5]])
    with caplog.at_level(logging.WARNING):
        rep = evaluate([pairs[1], bad, pairs[2]], reference_sep)
    assert len(rep.scores) == 2 and len(rep.skipped) == 1
    assert rep.skipped[0][0] == "utt00001"
    assert "skipped" in caplog.text
    assert rep.to_csv().splitlines()[-1] == "skipped,1,,"


def test_wrong_estimate_shape_is_skipped(pairs):
    rep = evaluate(pairs[:1], lambda m, r: np.zeros((2, 3)))
    assert not rep.scores and rep.skipped[0][1] == "estimate shape mismatch"


def test_report_csv_is_stable(pairs):
    a = evaluate(pairs, OracleSeparator("irm")).to_csv()
    b = evaluate(pairs, OracleSeparator("irm")).to_csv()
    assert a == b
    lines = a.splitlines()
    assert lines[0] == "utterance,si_snri_db,sdri_db,permutation"
    assert lines[-2].startswith("mean,")
    assert len(lines) == 1 + len(pairs) + 2


def test_manifest_entries_are_evaluated(tmp_path, pairs):
    lines = []
    for i, (mix, refs) in enumerate(pairs[:2]):
        names = [f"m{i}.wav", f"m{i}.a.wav", f"m{i}.b.wav"]
        for n, sig in zip(names, [mix] + list(refs)):
            write_wav(tmp_path / n, AudioClip(sig, 8000), fmt="float32")
        lines.append("\t".join(names))
    (tmp_path / "list.tsv").write_text("\n".join(lines) + "\n")
    rep = evaluate(read_manifest(tmp_path / "list.tsv"), reference_sep, sample_rate=8000)
    assert [s.name for s in rep.scores] == ["m0", "m1"]


def test_oracle_invariants_and_ordering(pairs):
    means = {}
    for kind in ("ibm", "irm", "wfm"):
        sep = OracleSeparator(kind)
        means[kind] = evaluate(pairs, sep).mean_si_snri
        assert sep.checked == len(pairs) and sep.invariant_status == "pass"
    assert means["wfm"] >= means["irm"]
    assert all(v > 5 for v in means.values())


def test_oracle_rejects_unknown_kind():
    with pytest.raises(ValueError):
        OracleSeparator("oracle")


def test_mask_invariant_checker():
    ok = np.array([[[0.3]], [[0.7]]])
    assert mask_invariants_hold("irm", ok)
    assert not mask_invariants_hold("irm", ok * 1.1)
    assert mask_invariants_hold("ibm", np.array([[[1.0]], [[0.0]]]))
    assert not mask_invariants_hold("ibm", np.array([[[1.0]], [[1.0]]]))
    assert not mask_invariants_hold("ibm", ok)


def test_model_separator_matches_separate(pairs):
    p = build(MICRO, seed=0)
    mix, refs = pairs[0]
    np.testing.assert_array_equal(model_separator(p)(mix, refs), separate(p, mix))


def test_streaming_separator_matches_offline(pairs):
    p = build(MICRO_CAUSAL, seed=0)
    mix, refs = pairs[0]
    a = model_separator(p)(mix, refs)
    b = model_separator(p, streaming=True, chunk=100)(mix, refs)
    assert a.shape == b.shape and np.max(np.abs(a - b)) < 1e-4


def test_shift_zero_equals_evaluation(pairs):
    mix, refs = pairs[1]
    sep = OracleSeparator("wfm")
    rep = shift_experiment(sep, mix, refs, max_shift=40, step=8)
    assert rep.shifts == [0, 8, 16, 24, 32, 40]
    si, sd, _ = si_snr_improvement(sep(mix, refs), refs, mix)
    assert rep.si_snri[0] == si and rep.sdri[0] == sd
    assert rep.std_sdri == float(np.std(rep.sdri))
    assert rep.to_csv().splitlines()[0] == "shift,sdri_db,si_snri_db"


def test_shift_trace_is_deterministic(pairs):
    p = build(MICRO_CAUSAL, seed=1)
    mix, refs = pairs[2]
    a = shift_experiment(model_separator(p), mix, refs, 16, 4)
    b = shift_experiment(model_separator(p), mix, refs, 16, 4)
    assert a.sdri == b.sdri and a.si_snri == b.si_snri


def test_shift_argument_checks(pairs):
    mix, refs = pairs[0]
    with pytest.raises(ValueError):
        shift_experiment(reference_sep, mix, refs, 10, 0)
    with pytest.raises(Exception, match="max_shift"):
        shift_experiment(reference_sep, mix, refs, mix.size, 1)
