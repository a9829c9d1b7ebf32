"""Reading recorded signals from CSV or 16-bit PCM WAV files."""
from __future__ import annotations

import csv
import wave
from pathlib import Path

import numpy as np

from .synthgen import TimeSeries

__all__ = ["JITTER_TOL", "ingest", "read_csv", "read_wav", "read_matrix_csv"]

JITTER_TOL = 1e-4  # relative deviation of any time step from the median step


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def _pick(columns, names, channel):
    if channel is None:
        if len(columns) != 1:
            raise ValueError(f"{len(columns)} value columns found; select one with a channel")
        return columns[0]
    if isinstance(channel, str) and not channel.lstrip("-").isdigit():
        if names is None or channel not in names:
            raise ValueError(f"no column named {channel!r}")
        return columns[names.index(channel)]
    idx = int(channel)
    if not -len(columns) <= idx < len(columns):
        raise ValueError(f"channel {idx} out of range for {len(columns)} value columns")
    return columns[idx]


def read_csv(path, channel=None, fs=None) -> TimeSeries:
    """Read ``time, value[, value...]`` rows, or a bare value column with ``fs``.

    The sampling frequency is inferred from the time stamps unless ``fs`` is
    given; in both cases time stamps must be uniform within ``JITTER_TOL``.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = None
    if not all(_is_number(cell) for cell in rows[0]):
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
    data = np.array([[float(cell) for cell in r] for r in rows], dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"{path}: no numeric rows")
    has_time = data.shape[1] >= 2 or (header is not None and header[0].lower() in ("time", "t"))
    if data.shape[1] == 1:
        has_time = False
    if not has_time:
        if fs is None:
            raise ValueError(f"{path}: a single column needs an explicit sampling frequency")
        return TimeSeries(data[:, 0].copy(), float(fs))
    t = data[:, 0]
    names = header[1:] if header is not None else None
    values = _pick([data[:, j] for j in range(1, data.shape[1])], names, channel)
    if t.size >= 2:
        steps = np.diff(t)
        step = float(np.median(steps))
        if not step > 0:
            raise ValueError(f"{path}: time stamps are not increasing")
        jitter = float(np.max(np.abs(steps - step)) / step)
        if jitter > JITTER_TOL:
            raise ValueError(f"{path}: non-uniform sampling, relative jitter {jitter:.3g} "
                             f"exceeds {JITTER_TOL:g}")
        inferred = 1.0 / step
    elif fs is None:
        raise ValueError(f"{path}: one sample cannot define a sampling frequency")
    else:
        inferred = float(fs)
    return TimeSeries(values.copy(), float(fs) if fs is not None else inferred)


def read_wav(path, channel=None, fs=None) -> TimeSeries:
    """Read a 16-bit PCM WAV file scaled to ``[-1, 1)``."""
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM is supported")
        nch = wf.getnchannels()
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    x = np.frombuffer(raw, dtype="<i2").reshape(-1, nch).astype(float) / 32768.0
    if nch == 1 and channel is None:
        channel = 0
    col = _pick([x[:, j] for j in range(nch)], None, channel)
    return TimeSeries(col.copy(), float(fs) if fs is not None else float(rate))


def ingest(path, format=None, channel=None, fs=None) -> TimeSeries:
    """Load a single-channel signal; the format defaults to the file suffix."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt in ("csv", "txt"):
        return read_csv(path, channel, fs)
    if fmt == "wav":
        return read_wav(path, channel, fs)
    raise ValueError(f"unsupported input format {fmt!r}")


def read_matrix_csv(path, skip_columns=1):
    """Integer matrix from a CSV with a header; rows become matrix columns.

    Used to read back per-frame activation or per-sample truth files, whose
    rows are frames (or samples) and whose leading columns are indices.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    data = np.array([[float(v) for v in r[skip_columns:]] for r in rows], dtype=float)
    return header[skip_columns:], data.T
