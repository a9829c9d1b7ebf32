"""STFT, DFT time-shift operator and phase-resynchronized spectral centroids."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

__all__ = [
    "StftConfig",
    "SpectralFrames",
    "CentroidSet",
    "Lifted",
    "UndefinedShiftError",
    "stft",
    "bin_frequencies",
    "time_shift",
    "estimate_window_shift",
    "lift_contiguous",
    "delta_stft",
    "remove_standby",
    "estimate_fundamental",
    "dump_complex_csv",
]

WINDOWS = ("hann", "rectangular", "hamming")


class UndefinedShiftError(ValueError):
    """Raised when a frame has no energy outside DC, so no phase can be read."""


@dataclass(frozen=True)
class StftConfig:
    window_size: int
    hop: int
    window_function: str = "hann"
    fs: float = 1.0

    def __post_init__(self):
        if self.window_size < 4:
            raise ValueError("window_size must be at least 4")
        if not 0 < self.hop <= self.window_size:
            raise ValueError("hop must satisfy 0 < hop <= window_size")
        if self.window_function not in WINDOWS:
            raise ValueError(f"window_function must be one of {WINDOWS}")

    def window(self):
        if self.window_function == "rectangular":
            return np.ones(self.window_size)
        # periodic (DFT-even) windows
        return get_window(self.window_function, self.window_size, fftbins=True)

    def n_frames(self, n_samples):
        if n_samples < self.window_size:
            return 0
        return 1 + (n_samples - self.window_size) // self.hop


@dataclass
class SpectralFrames:
    frames: np.ndarray  # (W, T) complex
    config: StftConfig
    starts: np.ndarray  # first sample of each frame
    shifts: np.ndarray | None = None  # applied time shifts, delta-STFT only
    undefined: np.ndarray | None = None  # frames whose shift could not be estimated

    @property
    def n_frames(self):
        return self.frames.shape[1]


@dataclass
class CentroidSet:
    atoms: np.ndarray  # (W, N) complex
    counts: np.ndarray
    energy: np.ndarray
    period: np.ndarray  # estimated fundamental period, samples (nan if undefined)
    parent: np.ndarray  # operation (cluster) id of each atom
    flagged: np.ndarray = None  # centroid averaged from unshifted frames
    ids: np.ndarray = None  # stable atom ids, preserved when atoms are removed

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=complex)
        if self.atoms.ndim == 1:
            self.atoms = self.atoms[:, None]
        n = self.atoms.shape[1]
        if self.flagged is None:
            self.flagged = np.zeros(n, dtype=bool)
        if self.ids is None:
            self.ids = np.arange(n)

    @classmethod
    def from_atoms(cls, atoms, counts=None, parent=None):
        """Build a set from raw atoms, deriving energy and periods."""
        atoms = np.asarray(atoms, dtype=complex)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        n = atoms.shape[1]
        energy = np.sum(np.abs(atoms) ** 2, axis=0)
        period = np.array([_period_or_nan(atoms[:, i]) for i in range(n)])
        return cls(atoms, np.ones(n, int) if counts is None else np.asarray(counts),
                   energy, period, np.arange(n) if parent is None else np.asarray(parent))

    @property
    def W(self):
        return self.atoms.shape[0]

    @property
    def N(self):
        return self.atoms.shape[1]

    def subset(self, keep):
        keep = np.asarray(keep)
        return CentroidSet(self.atoms[:, keep], self.counts[keep], self.energy[keep],
                           self.period[keep], self.parent[keep], self.flagged[keep],
                           self.ids[keep])


@dataclass
class Lifted:
    """Contiguous sub-operations obtained from per-frame cluster labels."""

    labels: np.ndarray  # (N, T) one-hot, zero column = unlabeled frame
    parent: np.ndarray  # cluster id of every sub-operation
    runs: list = field(default_factory=list)  # (first, last) frame of every sub-operation


def bin_frequencies(W):
    """Signed DFT bin indices: 0..W/2-1 then -W/2..-1."""
    return np.fft.fftfreq(W) * W


def stft(x, cfg: StftConfig) -> SpectralFrames:
    """Windowed DFT of every full frame, all W bins kept.

    Frame ``m`` covers samples ``m*hop .. m*hop + W - 1``; the DFT phase is
    referenced to the first sample of the frame.
    """
    samples = np.asarray(getattr(x, "samples", x), dtype=float)
    W, H = cfg.window_size, cfg.hop
    T = cfg.n_frames(samples.size)
    if T == 0:
        raise ValueError(f"signal of {samples.size} samples is shorter than one window ({W})")
    starts = np.arange(T) * H
    idx = starts[None, :] + np.arange(W)[:, None]
    frames = np.fft.fft(samples[idx] * cfg.window()[:, None], axis=0)
    return SpectralFrames(frames, cfg, starts)


def time_shift(z, delta):
    """Apply the DFT time-shift operator to a spectrum (or columns of spectra).

    Bin ``k`` is multiplied by ``exp(-2j*pi*k*delta/W)`` where ``k`` runs over
    the signed frequency grid, so integer shifts match the textbook formula
    on ``0 <= k < W`` and fractional shifts keep real-signal spectra
    Hermitian. ``delta`` may be a scalar or one shift per column.
    """
    z = np.asarray(z, dtype=complex)
    W = z.shape[0]
    omega = 2 * np.pi * bin_frequencies(W) / W
    delta = np.asarray(delta, dtype=float)
    if z.ndim == 1:
        return z * np.exp(-1j * omega * delta)
    if delta.ndim == 0:
        return z * np.exp(-1j * omega * delta)[:, None]
    return z * np.exp(-1j * np.multiply.outer(omega, delta))


def _peak_bin(frame):
    W = frame.shape[0]
    half = np.abs(frame[1:W // 2 + 1])
    if half.size == 0 or not np.any(half > 0):
        raise UndefinedShiftError("frame has no energy outside DC")
    return 1 + int(np.argmax(half))  # argmax keeps the lowest index on ties


def estimate_window_shift(frame, strategy="max_amplitude", rel_threshold=0.5):
    """Time shift (samples) that zeroes the phase of the dominant bin.

    ``max_amplitude`` reads the phase at the strongest bin in ``1..W/2``.
    ``dominant_ls`` fits one shift to every bin whose magnitude exceeds
    ``rel_threshold`` times the maximum, by least squares on
    ``phase_k = omega_k * delta`` with the integer phase ambiguity fixed to 0.
    """
    frame = np.asarray(frame, dtype=complex)
    W = frame.shape[0]
    K = _peak_bin(frame)
    if strategy == "max_amplitude":
        return float(np.angle(frame[K]) / (2 * np.pi * K / W))
    if strategy != "dominant_ls":
        raise ValueError(f"unknown strategy {strategy!r}")
    mag = np.abs(frame[1:W // 2 + 1])
    k = 1 + np.flatnonzero(mag >= rel_threshold * mag.max())
    omega = 2 * np.pi * k / W
    return float(omega @ np.angle(frame[k]) / (omega @ omega))


def estimate_fundamental(atom, fs=None):
    """Period (samples) of the strongest non-DC bin, ``W / K``."""
    atom = np.asarray(atom, dtype=complex)
    try:
        K = _peak_bin(atom)
    except UndefinedShiftError as exc:
        raise ValueError("fundamental undefined for an atom without non-DC content") from exc
    return atom.shape[0] / K


def _period_or_nan(atom):
    try:
        return estimate_fundamental(atom)
    except ValueError:
        return np.nan


def _as_label_vector(labels):
    labels = np.asarray(labels)
    if labels.ndim == 1:
        return labels.astype(int)
    if np.any(labels.sum(axis=0) > 1):
        raise ValueError("labels must be one-hot per frame")
    vec = np.argmax(labels, axis=0)
    vec[labels.sum(axis=0) == 0] = -1
    return vec


def lift_contiguous(labels, min_run=2) -> Lifted:
    """Split cluster labels into one sub-operation per maximal run.

    ``labels`` is either a one-hot ``(N_ops, T)`` matrix or a vector of
    cluster ids (negative = unlabeled). Runs shorter than ``min_run`` frames
    stay unlabeled.
    """
    vec = _as_label_vector(labels)
    T = vec.size
    runs, parent = [], []
    start = 0
    for m in range(1, T + 1):
        if m == T or vec[m] != vec[start]:
            if vec[start] >= 0 and m - start >= min_run:
                runs.append((start, m - 1))
                parent.append(int(vec[start]))
            start = m
    L = np.zeros((len(runs), T), dtype=np.int8)
    for g, (a, b) in enumerate(runs):
        L[g, a:b + 1] = 1
    return Lifted(L, np.array(parent, dtype=int), runs)


def delta_stft(x, labels, cfg: StftConfig, min_run=2, strategy="max_amplitude",
               unwrap=True, edge_trim=0):
    """Phase-resynchronized STFT and per-sub-operation centroids.

    Every frame is shifted so the phase of its dominant bin vanishes. With
    ``unwrap`` the estimated shifts are unwrapped along each contiguous run,
    choosing the representative closest to the previous shift plus one hop;
    this removes the ambiguity of a whole period of the dominant bin, which
    otherwise breaks stationarity when a segment mixes incommensurate
    frequencies. ``edge_trim`` frames at each end of a run are left out of the
    centroid average (they still carry their label).

    Returns
    -------
    (SpectralFrames, CentroidSet, Lifted)
    """
    Z = stft(x, cfg)
    W, T = Z.frames.shape
    vec = _as_label_vector(labels)
    if vec.size != T:
        raise ValueError(f"labels cover {vec.size} frames, STFT has {T}")
    lifted = lift_contiguous(vec, min_run)

    shifts = np.zeros(T)
    undefined = np.zeros(T, dtype=bool)
    peaks = np.zeros(T, dtype=int)
    for m in range(T):
        try:
            peaks[m] = _peak_bin(Z.frames[:, m])
            shifts[m] = estimate_window_shift(Z.frames[:, m], strategy)
        except UndefinedShiftError:
            undefined[m] = True

    if unwrap:
        for a, b in _runs_of(vec):
            for m in range(a + 1, b + 1):
                if undefined[m] or undefined[m - 1] or peaks[m] != peaks[m - 1]:
                    continue
                period = W / peaks[m]
                expected = shifts[m - 1] + cfg.hop
                shifts[m] += period * np.round((expected - shifts[m]) / period)

    dZ = time_shift(Z.frames, shifts)

    N = lifted.labels.shape[0]
    atoms = np.zeros((W, N), dtype=complex)
    counts = np.zeros(N, dtype=int)
    flagged = np.zeros(N, dtype=bool)
    for g, (a, b) in enumerate(lifted.runs):
        lo, hi = a + edge_trim, b - edge_trim
        if hi < lo:
            lo, hi = a, b
        sel = np.arange(lo, hi + 1)
        if np.all(undefined[sel]):
            flagged[g] = True
        atoms[:, g] = dZ[:, sel].mean(axis=1)
        counts[g] = sel.size
    energy = np.sum(np.abs(atoms) ** 2, axis=0)
    period = np.array([_period_or_nan(atoms[:, g]) for g in range(N)])
    C = CentroidSet(atoms, counts, energy, period, lifted.parent.copy(), flagged)
    frames = SpectralFrames(dZ, cfg, Z.starts, shifts, undefined)
    return frames, C, lifted


def _runs_of(vec):
    start = 0
    for m in range(1, vec.size + 1):
        if m == vec.size or vec[m] != vec[start]:
            if vec[start] >= 0:
                yield start, m - 1
            start = m


def remove_standby(C: CentroidSet, ratio=0.5):
    """Drop the stand-by operation (least RMS) when it is clearly separated.

    Atoms sharing the parent operation of the least-RMS atom form the stand-by
    candidate; it is removed when its largest RMS is below ``ratio`` times the
    smallest RMS among the other operations. Returns the reduced set and the
    removed atom ids (empty when nothing is removed).
    """
    if C.N <= 1:
        return C, np.array([], dtype=int)
    rms = np.sqrt(C.energy / C.W)
    low = int(np.argmin(rms))
    group = C.parent == C.parent[low]
    if np.all(group):
        # no parent information separates atoms: fall back to the single atom
        group = np.zeros(C.N, dtype=bool)
        group[low] = True
    others = rms[~group]
    if others.size == 0 or not rms[group].max() < ratio * others.min():
        return C, np.array([], dtype=int)
    removed = C.ids[group]
    return C.subset(np.flatnonzero(~group)), removed


def dump_complex_csv(matrix, path, column_name="frame"):
    """Write a complex ``(W, T)`` matrix as ``bin, column, real, imag`` rows."""
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", column_name, "real", "imag"])
        for j in range(matrix.shape[1]):
            for k in range(matrix.shape[0]):
                w.writerow([k, j, repr(float(matrix[k, j].real)), repr(float(matrix[k, j].imag))])

