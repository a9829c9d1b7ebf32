import numpy as np
import pytest
from scipy.io import wavfile

from csbmf.io import JITTER_TOL, ingest, read_matrix_csv


def _write_csv(path, t, cols, header=None):
    lines = [",".join(header)] if header else []
    lines += [",".join(repr(float(v)) for v in (ti, *c)) for ti, c in zip(t, np.atleast_2d(cols).T)]
    path.write_text("\n".join(lines) + "\n")


def test_csv_infers_sampling_frequency(tmp_path):
    t = np.arange(200) / 6250.0
    x = np.sin(2 * np.pi * 50 * t)
    _write_csv(tmp_path / "s.csv", t, x, ["time", "value"])
    ts = ingest(tmp_path / "s.csv")
    assert np.isclose(ts.fs, 6250.0)
    np.testing.assert_allclose(ts.samples, x)


def test_missing_row_is_reported_as_jitter(tmp_path):
    t = np.delete(np.arange(200) / 6250.0, 57)
    _write_csv(tmp_path / "s.csv", t, np.zeros(t.size))
    with pytest.raises(ValueError, match="jitter"):
        ingest(tmp_path / "s.csv")


def test_small_timestamp_rounding_is_accepted(tmp_path):
    t = np.arange(100) / 1000.0
    t[10] += 0.1 * JITTER_TOL / 1000.0
    _write_csv(tmp_path / "s.csv", t, np.zeros(100))
    assert np.isclose(ingest(tmp_path / "s.csv").fs, 1000.0, rtol=1e-6)


def test_multichannel_csv_needs_a_channel(tmp_path):
    t = np.arange(50) / 100.0
    _write_csv(tmp_path / "m.csv", t, np.vstack([np.ones(50), 2 * np.ones(50)]), ["time", "u", "v"])
    with pytest.raises(ValueError, match="channel"):
        ingest(tmp_path / "m.csv")
    assert ingest(tmp_path / "m.csv", channel="v").samples[0] == 2
    assert ingest(tmp_path / "m.csv", channel=0).samples[0] == 1
    with pytest.raises(ValueError):
        ingest(tmp_path / "m.csv", channel="w")
    with pytest.raises(ValueError):
        ingest(tmp_path / "m.csv", channel=5)


def test_single_column_needs_fs(tmp_path):
    (tmp_path / "v.csv").write_text("\n".join(str(v) for v in range(10)) + "\n")
    with pytest.raises(ValueError, match="sampling frequency"):
        ingest(tmp_path / "v.csv")
    ts = ingest(tmp_path / "v.csv", fs=500.0)
    assert ts.fs == 500.0 and ts.samples[-1] == 9


def test_wav_16_bit_scaling(tmp_path):
    pcm = np.array([0, 16384, -32768, 32767], dtype=np.int16)
    wavfile.write(tmp_path / "a.wav", 8000, pcm)
    ts = ingest(tmp_path / "a.wav")
    assert ts.fs == 8000
    np.testing.assert_array_equal(ts.samples, [0, 0.5, -1, 32767 / 32768])


def test_wav_stereo_channel(tmp_path):
    pcm = np.array([[1, -1], [2, -2]], dtype=np.int16)
    wavfile.write(tmp_path / "st.wav", 4000, pcm)
    with pytest.raises(ValueError, match="channel"):
        ingest(tmp_path / "st.wav")
    np.testing.assert_array_equal(ingest(tmp_path / "st.wav", channel=1).samples * 32768, [-1, -2])


def test_wav_rejects_other_widths(tmp_path):
    wavfile.write(tmp_path / "f.wav", 8000, np.zeros(4, dtype=np.int32))
    with pytest.raises(ValueError, match="16-bit"):
        ingest(tmp_path / "f.wav")


def test_unknown_format_and_missing_file(tmp_path):
    (tmp_path / "x.flac").write_bytes(b"")
    with pytest.raises(ValueError, match="format"):
        ingest(tmp_path / "x.flac")
    with pytest.raises(FileNotFoundError):
        ingest(tmp_path / "nope.csv")


def test_read_matrix_csv(tmp_path):
    (tmp_path / "m.csv").write_text("frame,s0,s1\n0,1,0\n1,0,1\n2,1,1\n")
    names, M = read_matrix_csv(tmp_path / "m.csv")
    assert names == ["s0", "s1"]
    np.testing.assert_array_equal(M, [[1, 0, 1], [0, 1, 1]])
