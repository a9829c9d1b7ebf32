"""Frame-level scoring of recovered activations against a ground truth."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .spectral import StftConfig

__all__ = ["FrameTruth", "EvalReport", "align_frames", "balanced_accuracy", "score"]


@dataclass
class FrameTruth:
    labels: np.ndarray  # (S, T) multi-hot per frame
    mask: np.ndarray  # (T,) True where a frame straddles a schedule change
    times: np.ndarray  # frame start times, s


@dataclass
class EvalReport:
    assignment: dict  # recovered row -> truth row
    balanced: list  # per truth source; unmatched sources are scored against zeros
    extra: list  # balanced accuracy of unmatched recovered rows against zeros
    hamming: float
    exact_match: float
    mask_size: int
    n_frames: int

    @property
    def min_balanced(self):
        return float(min(self.balanced)) if self.balanced else 1.0

    def to_dict(self):
        return {
            "assignment": {str(k): int(v) for k, v in self.assignment.items()},
            "balanced_accuracy": [float(v) for v in self.balanced],
            "unmatched_recovered_accuracy": [float(v) for v in self.extra],
            "hamming_accuracy": float(self.hamming),
            "exact_match_ratio": float(self.exact_match),
            "mask_size": int(self.mask_size),
            "n_frames": int(self.n_frames),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def align_frames(truth, fs, cfg: StftConfig) -> FrameTruth:
    """Per-frame majority labels of a per-sample truth, with transitions masked.

    A frame is masked when the active source set changes strictly inside its
    window (a change exactly at the first sample does not count).
    """
    truth = np.atleast_2d(np.asarray(truth))
    n = truth.shape[1]
    W, H = cfg.window_size, cfg.hop
    T = cfg.n_frames(n)
    starts = np.arange(T) * H
    change = np.zeros(n + 1, dtype=int)
    change[1:n] = np.any(truth[:, 1:] != truth[:, :-1], axis=0)
    csum = np.cumsum(change)
    csum_w = np.cumsum(np.concatenate([np.zeros((truth.shape[0], 1)), truth], axis=1), axis=1)
    labels = np.zeros((truth.shape[0], T), dtype=int)
    mask = np.zeros(T, dtype=bool)
    for m, s in enumerate(starts):
        active = (csum_w[:, s + W] - csum_w[:, s]) / W
        labels[:, m] = active >= 0.5
        mask[m] = csum[s + W - 1] - csum[s] > 0
    return FrameTruth(labels, mask, starts / float(fs))


def balanced_accuracy(pred, truth):
    """Mean of the true-positive and true-negative rates.

    When the truth has a single class only the rate of that class is used.
    """
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    rates = []
    if truth.any():
        rates.append(np.mean(pred[truth]))
    if (~truth).any():
        rates.append(np.mean(~pred[~truth]))
    return float(np.mean(rates)) if rates else 1.0


def score(recovered, truth, mask=None) -> EvalReport:
    """Match recovered rows to truth rows and report accuracies.

    The one-to-one assignment maximizes the summed balanced accuracy
    (Hungarian method). Masked frames are ignored.
    """
    rec = np.atleast_2d(np.asarray(recovered)).astype(bool)
    tru = np.atleast_2d(np.asarray(truth)).astype(bool)
    if rec.shape[1] != tru.shape[1]:
        raise ValueError(f"recovered has {rec.shape[1]} frames, truth has {tru.shape[1]}")
    keep = np.ones(tru.shape[1], dtype=bool) if mask is None else ~np.asarray(mask, dtype=bool)
    rec, tru = rec[:, keep], tru[:, keep]
    S_r, S_t = rec.shape[0], tru.shape[0]
    ba = np.array([[balanced_accuracy(rec[i], tru[j]) for j in range(S_t)] for i in range(S_r)])
    ba = ba.reshape(S_r, S_t)
    rows, cols = linear_sum_assignment(-ba) if ba.size else (np.array([], int), np.array([], int))
    assignment = {int(r): int(c) for r, c in zip(rows, cols)}

    aligned = np.zeros_like(tru)
    per_source = []
    for j in range(S_t):
        hit = [r for r, c in assignment.items() if c == j]
        if hit:
            aligned[j] = rec[hit[0]]
        per_source.append(balanced_accuracy(aligned[j], tru[j]))
    unmatched = [r for r in range(S_r) if r not in assignment]
    zeros = np.zeros(tru.shape[1], dtype=bool)
    extra = [balanced_accuracy(rec[r], zeros) for r in unmatched]

    full_pred = np.vstack([aligned, rec[unmatched]]) if unmatched else aligned
    full_true = np.vstack([tru, np.zeros((len(unmatched), tru.shape[1]), bool)]) if unmatched else tru
    n = full_true.shape[1]
    hamming = float(np.mean(full_pred == full_true)) if n and full_true.size else 1.0
    exact = float(np.mean(np.all(full_pred == full_true, axis=0))) if n else 1.0
    return EvalReport(assignment, per_source, extra, hamming, exact, int((~keep).sum()), n)
