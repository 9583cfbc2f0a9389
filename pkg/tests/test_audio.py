import os
import wave

import numpy as np
import pytest

from tasnet.audio import (
    MANIFEST_SNR_NOTE,
    AudioClip,
    load_pairs,
    read_manifest,
    read_wav,
    synthesize_mixtures,
    write_wav,
)
from tasnet.errors import DataError
from tasnet.synth import write_source_corpus


def test_ramp_round_trip_pcm16(tmp_path):
    x = np.linspace(-1, 1 - 1 / 32768, 5000)
    write_wav(tmp_path / "r.wav", AudioClip(x, 8000))
    y = read_wav(tmp_path / "r.wav")
    assert y.sample_rate == 8000 and len(y) == 5000
    assert np.max(np.abs(y.samples - x)) <= 1 / 32768


def test_float32_round_trip(tmp_path, rng):
    x = rng.uniform(-1, 1, 777)
    write_wav(tmp_path / "f.wav", AudioClip(x, 8000), fmt="float32")
    np.testing.assert_array_equal(read_wav(tmp_path / "f.wav").samples, x.astype(np.float32))


def test_pcm16_clips_out_of_range(tmp_path):
    write_wav(tmp_path / "c.wav", AudioClip(np.array([1.5, -1.5, 0.0]), 8000))
    np.testing.assert_array_equal(read_wav(tmp_path / "c.wav").samples, [32767 / 32768, -1.0, 0.0])


def test_other_rate_is_kept(tmp_path):
    write_wav(tmp_path / "h.wav", AudioClip(np.zeros(441), 44100))
    assert read_wav(tmp_path / "h.wav").sample_rate == 44100


def test_written_files_follow_umask(tmp_path):
    write_wav(tmp_path / "m.wav", AudioClip(np.zeros(10), 8000))
    umask = os.umask(0)
    os.umask(umask)
    assert (tmp_path / "m.wav").stat().st_mode & 0o777 == 0o666 & ~umask


def test_empty_files_rejected(tmp_path):
    (tmp_path / "zero.wav").write_bytes(b"")
    with pytest.raises(DataError):
        read_wav(tmp_path / "zero.wav")
    with wave.open(str(tmp_path / "nos.wav"), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(8000)
        w.writeframes(b"")
    with pytest.raises(DataError, match="no samples"):
        read_wav(tmp_path / "nos.wav")
    with pytest.raises(DataError):
        read_wav(tmp_path / "missing.wav")


def test_multichannel_and_codec_rejected(tmp_path):
    with wave.open(str(tmp_path / "st.wav"), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(2)
        w.setframerate(8000)
        w.writeframes(np.zeros(20, np.int16).tobytes())
    with pytest.raises(DataError, match="mono"):
        read_wav(tmp_path / "st.wav")
    with wave.open(str(tmp_path / "u8.wav"), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(8000)
        w.writeframes(bytes(range(10)))
    with pytest.raises(DataError, match="unsupported"):
        read_wav(tmp_path / "u8.wav")


def test_clip_validation():
    with pytest.raises(DataError):
        AudioClip(np.zeros((2, 3)), 8000)
    with pytest.raises(DataError):
        AudioClip(np.array([0.0, np.nan]), 8000)
    with pytest.raises(DataError):
        AudioClip(np.zeros(3), 0)
    assert AudioClip(np.zeros(4000), 8000).duration == 0.5


def test_manifest_parsing(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "m.tsv").write_text("# note\n\na.wav\tb.wav\tc.wav\n")
    entries = read_manifest(tmp_path / "sub" / "m.tsv", n_sources=2)
    assert entries[0].mixture == tmp_path / "sub" / "a.wav"
    assert entries[0].references == [tmp_path / "sub" / "b.wav", tmp_path / "sub" / "c.wav"]


@pytest.mark.parametrize("text", ["", "# only a comment\n", "a.wav\tb.wav\n"])
def test_bad_manifests(tmp_path, text):
    (tmp_path / "m.tsv").write_text(text)
    with pytest.raises(DataError):
        read_manifest(tmp_path / "m.tsv")


def test_manifest_source_count(tmp_path):
    (tmp_path / "m.tsv").write_text("a\tb\tc\td\n")
    with pytest.raises(DataError, match="expected 2"):
        read_manifest(tmp_path / "m.tsv", n_sources=2)
    with pytest.raises(DataError):
        read_manifest(tmp_path / "absent.tsv")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return write_source_corpus(root / "src", n_speakers=3, per_speaker=2, seconds=0.5, seed=0)


def test_zero_db_mixtures(corpus, tmp_path):
    manifest = synthesize_mixtures(corpus, tmp_path / "mix", count=4, snr_min_db=0, snr_max_db=0, seed=1)
    entries = read_manifest(manifest, n_sources=2)
    assert len(entries) == 4
    for mix, refs in load_pairs(entries, sample_rate=8000):
        p = [np.mean(r**2) for r in refs]
        assert abs(p[0] - p[1]) <= 1e-6 * max(p)
        assert np.array_equal(mix, (refs[0].astype(np.float32) + refs[1].astype(np.float32)).astype(np.float64))
        assert np.max(np.abs(mix)) <= 0.9 + 1e-6


def test_snr_range_respected(corpus, tmp_path):
    manifest = synthesize_mixtures(corpus, tmp_path / "mix", count=6, snr_min_db=-5, snr_max_db=5, seed=2)
    for mix, refs in load_pairs(read_manifest(manifest)):
        snr = 10 * np.log10(np.mean(refs[0] ** 2) / np.mean(refs[1] ** 2))
        assert -5 - 1e-4 <= snr <= 5 + 1e-4


def test_manifest_is_deterministic(corpus, tmp_path):
    a = synthesize_mixtures(corpus, tmp_path / "a", count=3, seed=5)
    b = synthesize_mixtures(corpus, tmp_path / "b", count=3, seed=5)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == MANIFEST_SNR_NOTE
    for name in ("mix00000.wav", "mix00002.s2.wav"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_too_few_pools(corpus, tmp_path):
    with pytest.raises(DataError, match="at least 2"):
        synthesize_mixtures(corpus[:1], tmp_path / "x", count=1)
    with pytest.raises(DataError):
        synthesize_mixtures(corpus, tmp_path / "x", count=1, snr_min_db=3, snr_max_db=1)


def test_load_pairs_rate_check(tmp_path):
    for name in ("m", "a", "b"):
        write_wav(tmp_path / f"{name}.wav", AudioClip(np.zeros(100), 16000))
    (tmp_path / "l.tsv").write_text("m.wav\ta.wav\tb.wav\n")
    with pytest.raises(DataError, match="16000"):
        load_pairs(read_manifest(tmp_path / "l.tsv"), sample_rate=8000)
