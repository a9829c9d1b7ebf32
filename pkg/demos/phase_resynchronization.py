"""
Why phases must be aligned before spectra are averaged or added.

1. A stationary segment whose length is not a whole number of periods gives
   frames whose complex spectra rotate from one frame to the next. Shifting
   every frame so that its dominant bin has zero phase makes them identical.
2. A composite operation is only the *sum* of its sources once each source
   is allowed its own time shift. Without shifts the sum does not match;
   comparing magnitudes alone does not help where harmonics overlap.
"""
import numpy as np

from csbmf import resync, spectral, synthgen
from csbmf.spectral import CentroidSet, StftConfig


def dispersion(frames):
    mean = np.abs(frames).mean(axis=1)
    std = np.sqrt(np.mean(np.abs(frames - frames.mean(axis=1, keepdims=True)) ** 2, axis=1))
    live = mean > 1e-9 * mean.max()
    return float(np.max(std[live] / mean[live]))


def stationarity():
    fs, W, H = 7000.0, 700, 175  # hop of 175 samples is not a multiple of the 140-sample period
    x, _ = synthgen.compose_sequence([synthgen.SourceModel("triangle", 50.0)],
                                     synthgen.ActivationSchedule([synthgen.Interval((0,), 0.0, 1.0)]), fs)
    cfg = StftConfig(W, H, "rectangular", fs)
    raw = spectral.stft(x, cfg).frames
    labels = np.zeros(raw.shape[1], dtype=int)
    aligned, _, _ = spectral.delta_stft(x, labels, cfg)
    print(f"frame-to-frame spread, raw frames     {dispersion(raw):.2e}")
    print(f"frame-to-frame spread, aligned frames {dispersion(aligned.frames):.2e}")


def composite():
    W, fs = 700, 7000.0
    a = synthgen.render_waveform(synthgen.SourceModel("square", 70.0), W / fs, fs).samples
    b = synthgen.render_waveform(synthgen.SourceModel("triangle", 50.0), W / fs, fs).samples
    # the composite started a and b at different moments
    ab = np.roll(a, 37) + np.roll(b, 81)
    C = CentroidSet.from_atoms(np.fft.fft(np.stack([a, b, ab], axis=1), axis=0))
    plain = resync.reconstruction_error(C, 2, [1, 1, 0], [0, 0, 0])
    modulus = resync.modulus_residual(C, 2, [0, 1])
    r, shifts = resync.multistart(C, resync.ResyncProblem(2, (0, 1)))
    print(f"\n||ab||^2                       {C.energy[2]:.4g}")
    print(f"residual of a + b, no shifts   {plain:.4g}")
    print(f"residual of |a| + |b|          {modulus:.4g}")
    print(f"residual with optimal shifts   {r:.3g}  (shifts {np.round(shifts, 3)} samples)")


if __name__ == "__main__":
    stationarity()
    composite()
