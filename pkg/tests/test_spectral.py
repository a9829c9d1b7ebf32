import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _oracles as O
from csbmf.spectral import (CentroidSet, StftConfig, UndefinedShiftError, delta_stft,
                            dump_complex_csv, estimate_fundamental, estimate_window_shift,
                            lift_contiguous, remove_standby, stft, time_shift)
from csbmf.synthgen import SourceModel, render_waveform


# ---- time shift ------------------------------------------------------------

def test_time_shift_w4_example():
    out = time_shift(np.ones(4), 1)
    np.testing.assert_allclose(out, [1, -1j, -1, 1j], atol=1e-15)


def test_time_shift_identity_and_full_period():
    z = np.random.default_rng(0).normal(size=16) + 0j
    np.testing.assert_array_equal(time_shift(z, 0), z)
    np.testing.assert_allclose(time_shift(z, 16), z, atol=1e-13)


def test_integer_shift_is_circular_roll():
    x = np.random.default_rng(1).normal(size=32)
    for d in (-5, 3, 11):
        np.testing.assert_allclose(np.fft.ifft(time_shift(np.fft.fft(x), d)).real,
                                   np.roll(x, d), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(W=st.integers(4, 40), d=st.floats(-20, 20), seed=st.integers(0, 1000))
def test_fractional_shift_keeps_real_spectra_hermitian(W, d, seed):
    z = np.fft.fft(np.random.default_rng(seed).normal(size=W))
    out = time_shift(z, d)
    k = np.arange(1, (W + 1) // 2)
    np.testing.assert_allclose(out[W - k], np.conj(out[k]), atol=1e-12)


def test_time_shift_per_column():
    Z = np.random.default_rng(2).normal(size=(8, 3)) + 0j
    d = np.array([0.5, -1.0, 2.25])
    out = time_shift(Z, d)
    for j in range(3):
        np.testing.assert_allclose(out[:, j], O.shift(Z[:, j], d[j]), atol=1e-14)


# ---- STFT -----------------------------------------------------------------

def test_stft_constant_signal():
    Z = stft(np.full(100, 3.0), StftConfig(10, 5, "rectangular"))
    np.testing.assert_allclose(Z.frames[0], 30.0)
    np.testing.assert_allclose(Z.frames[1:], 0.0, atol=1e-12)
    assert Z.n_frames == 19


def test_stft_zero_signal():
    assert not np.any(stft(np.zeros(64), StftConfig(16, 8)).frames)


def test_stft_exact_bin_cosine():
    W, k0 = 64, 5
    n = np.arange(256)
    Z = stft(np.cos(2 * np.pi * k0 * n / W), StftConfig(W, W, "rectangular"))
    mag = np.abs(Z.frames)
    assert np.allclose(mag[[k0, W - k0]], W / 2)
    mag[[k0, W - k0]] = 0
    assert mag.max() < 1e-10


def test_stft_frame_layout_and_conjugate_symmetry():
    x = np.random.default_rng(3).normal(size=1000)
    cfg = StftConfig(128, 50, "hann")
    Z = stft(x, cfg)
    assert Z.n_frames == 1 + (1000 - 128) // 50
    np.testing.assert_array_equal(Z.starts, np.arange(Z.n_frames) * 50)
    # direct DFT of the third frame
    seg = x[100:228] * cfg.window()
    np.testing.assert_allclose(Z.frames[:, 2], np.fft.fft(seg), atol=1e-12)
    k = np.arange(1, 64)
    np.testing.assert_allclose(Z.frames[128 - k], np.conj(Z.frames[k]), atol=1e-12)


def test_stft_rejects_short_signal_and_bad_config():
    with pytest.raises(ValueError, match="shorter"):
        stft(np.zeros(10), StftConfig(16, 8))
    with pytest.raises(ValueError):
        StftConfig(16, 0)
    with pytest.raises(ValueError):
        StftConfig(16, 17)
    with pytest.raises(ValueError):
        StftConfig(16, 8, "kaiser")


def test_periodic_window():
    w = StftConfig(8, 4, "hann").window()
    np.testing.assert_allclose(w, 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(8) / 8), atol=1e-15)


# ---- shift estimation -------------------------------------------------------

def test_estimate_window_shift_w8_example():
    n = np.arange(8)
    frame = np.fft.fft(np.cos(2 * np.pi * 2 * n / 8 + np.pi / 2))
    assert np.isclose(estimate_window_shift(frame), 1.0)


@pytest.mark.parametrize("k", [1, 3, 7])
def test_zero_phase_cosine_has_zero_shift(k):
    n = np.arange(32)
    frame = np.fft.fft(np.cos(2 * np.pi * k * n / 32))
    assert abs(estimate_window_shift(frame)) < 1e-12
    assert abs(estimate_window_shift(frame, "dominant_ls")) < 1e-12


@settings(max_examples=50, deadline=None)
@given(d=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_shifting_a_frame_moves_the_estimate(d, seed):
    W, K = 64, 4  # period 16 samples at the peak bin
    rng = np.random.default_rng(seed)
    n = np.arange(W)
    x = np.cos(2 * np.pi * K * n / W + rng.uniform(-np.pi, np.pi)) + 0.2 * np.cos(2 * np.pi * 9 * n / W)
    frame = np.fft.fft(x)
    diff = estimate_window_shift(frame) - estimate_window_shift(time_shift(frame, d))
    period = W / K
    assert abs((diff - d + period / 2) % period - period / 2) < 1e-9


def test_estimate_shift_undefined_on_dc_only_frame():
    with pytest.raises(UndefinedShiftError):
        estimate_window_shift(np.fft.fft(np.full(16, 2.0)))
    with pytest.raises(UndefinedShiftError):
        estimate_window_shift(np.zeros(16))


def test_peak_tie_takes_lowest_bin():
    n = np.arange(16)
    frame = np.fft.fft(np.cos(2 * np.pi * 2 * n / 16 + 0.3) + np.cos(2 * np.pi * 5 * n / 16 + 1.1))
    assert np.isclose(estimate_window_shift(frame), 0.3 / (2 * np.pi * 2 / 16))


def test_unknown_strategy():
    with pytest.raises(ValueError):
        estimate_window_shift(np.fft.fft(np.cos(np.arange(8))), "median")


# ---- fundamental ------------------------------------------------------------

def test_fundamental_sine_example():
    x = render_waveform(SourceModel("sine", 50.0), 0.02, 6400.0).samples
    assert estimate_fundamental(np.fft.fft(x[:128])) == 128


def test_fundamental_square_example():
    x = render_waveform(SourceModel("square", 70.0), 128 / 8960, 8960.0).samples
    assert estimate_fundamental(np.fft.fft(x)) == 128


def test_fundamental_dc_only_rejected():
    with pytest.raises(ValueError):
        estimate_fundamental(np.fft.fft(np.ones(8)))


# ---- lifting and centroids ----------------------------------------------------

def test_lift_example():
    L = lift_contiguous(np.array([0, 0, 1, 1, 0, 0]))
    assert L.runs == [(0, 1), (2, 3), (4, 5)]
    assert list(L.parent) == [0, 1, 0]
    np.testing.assert_array_equal(L.labels, [[1, 1, 0, 0, 0, 0], [0, 0, 1, 1, 0, 0], [0, 0, 0, 0, 1, 1]])


def test_lift_single_run_and_short_run():
    L = lift_contiguous(np.zeros(5, dtype=int))
    assert L.labels.shape == (1, 5) and L.labels.all()
    L = lift_contiguous(np.array([0, 0, 1, 2, 2]), min_run=2)
    assert L.runs == [(0, 1), (3, 4)]
    assert not L.labels[:, 2].any()


def test_lift_accepts_one_hot():
    onehot = np.array([[1, 1, 0, 0], [0, 0, 1, 1]])
    assert lift_contiguous(onehot).runs == [(0, 1), (2, 3)]
    with pytest.raises(ValueError):
        lift_contiguous(np.array([[1, 1], [1, 0]]))


def test_identical_frames_give_that_frame():
    W = 32
    n = np.arange(2 * W)
    x = np.cos(2 * np.pi * 3 * n / W + 0.4)
    frames, C, _ = delta_stft(x, np.zeros(2, dtype=int), StftConfig(W, W, "rectangular"),
                              min_run=1, unwrap=False)
    np.testing.assert_allclose(C.atoms[:, 0], frames.frames[:, 0], atol=1e-12)
    np.testing.assert_allclose(frames.frames[:, 0], frames.frames[:, 1], atol=1e-12)


def test_sinusoid_frames_become_stationary():
    W, H = 64, 24  # hop is not a whole number of periods (64 / 5)
    n = np.arange(20 * W)
    x = 1.5 * np.cos(2 * np.pi * 5 * n / W + 0.7)
    cfg = StftConfig(W, H, "rectangular")
    T = cfg.n_frames(n.size)
    raw = stft(x, cfg).frames
    frames, C, _ = delta_stft(x, np.zeros(T, dtype=int), cfg)
    live = np.abs(frames.frames[:, 0]) > 1e-9
    spread = np.max(np.abs(frames.frames[live] - frames.frames[live, :1]))
    assert spread < 1e-6 * np.abs(frames.frames[live]).mean()
    assert np.max(np.abs(raw[live] - raw[live, :1])) > 1.0
    np.testing.assert_allclose(np.abs(C.atoms[:, 0]), np.abs(raw[:, 0]), atol=1e-9)


def test_centroid_additivity(clean):
    from csbmf.resync import ResyncProblem, multistart
    C = clean.C
    c = clean.atom_of((0, 1))
    r, _ = multistart(C, ResyncProblem(c, (clean.atom_of((0,)), clean.atom_of((1,)))))
    assert r < 1e-8 * C.energy[c]


def test_all_undefined_run_is_flagged():
    W = 16
    x = np.concatenate([np.full(2 * W, 0.5), np.cos(2 * np.pi * np.arange(2 * W) / 8)])
    frames, C, _ = delta_stft(x, np.array([0, 0, 1, 1]), StftConfig(W, W, "rectangular"))
    assert list(C.flagged) == [True, False]
    assert frames.undefined[:2].all()
    np.testing.assert_allclose(C.atoms[0, 0], W * 0.5)


def test_label_length_mismatch():
    with pytest.raises(ValueError, match="labels"):
        delta_stft(np.zeros(64), np.zeros(3, int), StftConfig(16, 16))


def test_scenario_yields_seven_plus_standby(clean):
    assert clean.C_all.N >= 7
    assert clean.C.N == 7
    assert sorted(clean.subset, key=lambda s: (len(s), s)) == [
        (0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]


# ---- stand-by -------------------------------------------------------------------

def _energies(e):
    W = 8
    atoms = np.zeros((W, len(e)), complex)
    atoms[1] = np.sqrt(e)
    return CentroidSet.from_atoms(atoms)


def test_standby_removed_when_separated():
    C2, removed = remove_standby(_energies([0.01, 5, 3]))
    assert list(removed) == [0]
    assert C2.N == 2 and list(C2.ids) == [1, 2]


def test_standby_kept_without_clear_gap():
    C2, removed = remove_standby(_energies([2.9, 3.0, 3.1]))
    assert removed.size == 0 and C2.N == 3


def test_standby_single_atom():
    C2, removed = remove_standby(_energies([0.01]))
    assert removed.size == 0 and C2.N == 1


def test_standby_removes_all_subops_of_idle_cluster(clean):
    # every idle gap of the scenario becomes a sub-operation of one cluster
    assert clean.removed.size == 8
    assert len(set(clean.C_all.parent[clean.removed])) == 1


def test_dump_complex_csv(tmp_path):
    M = np.array([[1 + 2j, 3], [0, 0 - 1j]])
    dump_complex_csv(M, tmp_path / "m.csv")
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "bin,frame,real,imag"
    assert rows[1] == "0,0,1.0,2.0" and rows[4] == "1,1,0.0,-1.0"
