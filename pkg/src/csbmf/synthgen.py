"""Synthetic piecewise-stationary mixtures with exact activation ground truth.

Sources are ideal periodic waveforms. A schedule lists successive,
non-overlapping intervals, each naming the set of active sources. A source
that was not active immediately before an interval restarts at phase zero
when the interval begins, while a source active across two adjacent
intervals keeps a continuous phase.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

__all__ = [
    "SourceModel",
    "Interval",
    "ActivationSchedule",
    "TimeSeries",
    "Scenario",
    "render_waveform",
    "compose_sequence",
    "three_source_scenario",
    "load_scenario",
    "save_scenario",
    "write_signal_csv",
    "write_truth_csv",
]

WAVEFORMS = ("sine", "square", "triangle")


@dataclass
class SourceModel:
    kind: str
    frequency: float
    amplitude: float = 1.0
    reference_phase: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in WAVEFORMS:
            raise ValueError(f"unknown waveform {self.kind!r}, expected one of {WAVEFORMS}")
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")


@dataclass
class Interval:
    sources: tuple
    start: float
    end: float

    def __post_init__(self):
        self.sources = tuple(sorted(int(s) for s in self.sources))
        if not self.end > self.start:
            raise ValueError(f"interval [{self.start}, {self.end}] has no positive duration")


@dataclass
class ActivationSchedule:
    entries: list
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.entries = [e if isinstance(e, Interval) else Interval(**e) for e in self.entries]
        for prev, cur in zip(self.entries, self.entries[1:]):
            if cur.start < prev.end:
                raise ValueError("schedule intervals must be ordered and non-overlapping")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass
class TimeSeries:
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("a time series needs at least one sample")
        if self.fs <= 0:
            raise ValueError("sampling frequency must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def times(self):
        return np.arange(self.samples.size) / self.fs


@dataclass
class Scenario:
    """Everything needed to regenerate a synthetic recording."""

    sources: list
    schedule: ActivationSchedule
    fs: float
    seed: int = 0
    duration: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "fs": self.fs,
            "seed": self.seed,
            "duration": self.duration,
            "noise_sigma": self.schedule.noise_sigma,
            "sources": [asdict(s) for s in self.sources],
            "schedule": [
                {"sources": list(e.sources), "start": e.start, "end": e.end}
                for e in self.schedule.entries
            ],
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d):
        sources = [SourceModel(**s) for s in d["sources"]]
        schedule = ActivationSchedule(
            [Interval(**e) for e in d["schedule"]], noise_sigma=d.get("noise_sigma", 0.0)
        )
        return cls(sources, schedule, float(d["fs"]), int(d.get("seed", 0)),
                   d.get("duration"), dict(d.get("meta") or {}))

    def generate(self, noise=None):
        return compose_sequence(self.sources, self.schedule, self.fs, self.seed,
                                duration=self.duration, noise=noise)


def _cycles(frequency, n, fs, phase):
    # fractional cycle position in [0, 1), computed without accumulating phase error
    c = frequency * np.asarray(n, dtype=float) / fs + phase / (2 * np.pi)
    return np.mod(c, 1.0)


def _shape(kind, u):
    if kind == "sine":
        return np.sin(2 * np.pi * u)
    if kind == "square":
        out = np.where(u < 0.5, 1.0, -1.0)
        out[(u == 0.0) | (u == 0.5)] = 0.0
        return out
    # triangle in sine phase: 0 -> +1 -> 0 -> -1
    return np.where(u < 0.25, 4 * u, np.where(u < 0.75, 2 - 4 * u, 4 * u - 4))


def _render(model, n, fs, onset_phase):
    if model.amplitude == 0:
        return np.zeros(np.size(n))
    u = _cycles(model.frequency, n, fs, model.reference_phase + onset_phase)
    return model.amplitude * _shape(model.kind, u)


def render_waveform(model: SourceModel, duration: float, fs: float, onset_phase: float = 0.0) -> TimeSeries:
    """Render ``duration`` seconds of a zero-centred periodic waveform.

    Parameters
    ----------
    model : SourceModel
        Waveform kind, frequency (Hz), amplitude and reference phase.
    duration : float
        Length in seconds; the number of samples is ``round(duration * fs)``.
    fs : float
        Sampling frequency, must exceed twice the source frequency.
    onset_phase : float
        Phase (radians) of the waveform at sample 0.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if fs <= 2 * model.frequency:
        raise ValueError(
            f"Nyquist violation: fs={fs} Hz must exceed 2 x {model.frequency} Hz"
        )
    n = np.arange(int(round(duration * fs)))
    return TimeSeries(_render(model, n, fs, onset_phase), fs)


def gaussian_noise(rng, size, sigma):
    return rng.normal(0.0, sigma, size)


def compose_sequence(sources: Sequence[SourceModel], schedule: ActivationSchedule, fs: float,
                     seed: int = 0, duration: float | None = None,
                     noise: Callable | None = None):
    """Mix the scheduled sources into one recording.

    Returns ``(TimeSeries, truth)`` where ``truth`` is a ``(S, T')`` 0/1 array
    flagging which sources are active at every sample. Samples outside every
    interval are idle (stand-by) and carry only noise. ``noise`` is an optional
    hook ``noise(rng, size, sigma) -> array``; Gaussian by default.
    """
    if not schedule.entries:
        raise ValueError("empty schedule")
    n_src = len(sources)
    for e in schedule.entries:
        for s in e.sources:
            if not 0 <= s < n_src:
                raise ValueError(f"schedule references unknown source {s}")
    for m in sources:
        if fs <= 2 * m.frequency:
            raise ValueError(f"Nyquist violation for {m.frequency} Hz at fs={fs}")

    end = schedule.entries[-1].end if duration is None else max(duration, schedule.entries[-1].end)
    total = int(round(end * fs))
    x = np.zeros(total)
    truth = np.zeros((n_src, total), dtype=np.int8)

    # sample index at which each source's phase origin sits
    origin = {}
    prev_end_sample = None
    prev_sources = ()
    for e in schedule.entries:
        a = int(round(e.start * fs))
        b = min(int(round(e.end * fs)), total)
        adjacent = prev_end_sample is not None and a == prev_end_sample
        for s in e.sources:
            if not (adjacent and s in prev_sources):
                origin[s] = a
            n = np.arange(a, b) - origin[s]
            x[a:b] += _render(sources[s], n, fs, 0.0)
            truth[s, a:b] = 1
        prev_end_sample, prev_sources = b, e.sources

    if schedule.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        x += (noise or gaussian_noise)(rng, total, schedule.noise_sigma)
    return TimeSeries(x, fs), truth


def three_source_scenario(noise_sigma=0.1, fs=7000.0, seed=0, interval=1.03, gap=0.517):
    """Square 70 Hz, triangle 50 Hz, sine 50 Hz and all their non-empty sums.

    Intervals are separated by idle gaps so that every operation starts from
    rest; interval and gap lengths are deliberately not whole numbers of
    periods or frames.
    """
    sources = [
        SourceModel("square", 70.0, 1.0, name="a"),
        SourceModel("triangle", 50.0, 1.0, name="b"),
        SourceModel("sine", 50.0, 2.0, name="c"),
    ]
    order = [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]
    entries = []
    t = gap
    for srcs in order:
        entries.append(Interval(srcs, round(t, 6), round(t + interval, 6)))
        t += interval + gap
    schedule = ActivationSchedule(entries, noise_sigma=noise_sigma)
    return Scenario(sources, schedule, fs, seed, duration=round(t, 6))


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        d = yaml.safe_load(fh)
    return Scenario.from_dict(d)


def save_scenario(scenario: Scenario, path):
    with open(path, "w") as fh:
        yaml.safe_dump(scenario.to_dict(), fh, sort_keys=False)


def write_signal_csv(ts: TimeSeries, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "value"])
        for t, v in zip(ts.times, ts.samples):
            w.writerow([repr(float(t)), repr(float(v))])


def write_truth_csv(truth, fs, path, names=None):
    truth = np.asarray(truth)
    names = names or [f"source_{i}" for i in range(truth.shape[0])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *names])
        for j in range(truth.shape[1]):
            w.writerow([repr(j / fs), *(int(v) for v in truth[:, j])])
