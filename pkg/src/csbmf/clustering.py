"""Segmentation of the spectral frame stream into operations with k-means."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import kmeans_plusplus
from sklearn.metrics import silhouette_score

from .spectral import SpectralFrames

__all__ = [
    "FeatureMatrix",
    "ClusterResult",
    "extract_features",
    "kmeans",
    "estimate_num_operations",
    "one_hot",
    "write_labels_csv",
]


@dataclass
class FeatureMatrix:
    features: np.ndarray  # (F, T) real
    kind: str = "log_magnitude"

    @property
    def T(self):
        return self.features.shape[1]


@dataclass
class ClusterResult:
    labels: np.ndarray  # (k, T) one-hot
    centroids: np.ndarray  # (F, k)
    inertia: float
    history: list = field(default_factory=list)  # inertia after every Lloyd step
    n_iter: int = 0

    @property
    def vector(self):
        return np.argmax(self.labels, axis=0)


def extract_features(Z, kind="log_magnitude") -> FeatureMatrix:
    """Phase-invariant per-frame features on bins ``0..W/2``."""
    frames = Z.frames if isinstance(Z, SpectralFrames) else np.asarray(Z)
    W = frames.shape[0]
    mag = np.abs(frames[:W // 2 + 1])
    if kind == "stft_magnitude":
        return FeatureMatrix(mag, kind)
    if kind == "log_magnitude":
        return FeatureMatrix(np.log1p(mag), kind)
    raise ValueError(f"unknown feature kind {kind!r}")


def one_hot(vec, k):
    L = np.zeros((k, vec.size), dtype=np.int8)
    L[vec, np.arange(vec.size)] = 1
    return L


def _lloyd(X, centers, max_iter, tol):
    history = []
    labels = None
    for it in range(1, max_iter + 1):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(X.shape[0]), labels].sum()))
        new = centers.copy()
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
            else:
                # reseed an empty cluster on the point farthest from its centre
                far = int(np.argmax(d2[np.arange(X.shape[0]), labels]))
                new[j] = X[far]
                labels[far] = j
        shift = np.sum((new - centers) ** 2)
        centers = new
        if shift <= tol:
            break
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(X.shape[0]), labels].sum())
    history.append(inertia)
    return labels, centers, inertia, history, it


def kmeans(F: FeatureMatrix, k, seed=0, max_iter=300, tol=1e-10, n_init=1) -> ClusterResult:
    """Lloyd's algorithm from k-means++ seeding, deterministic for a seed.

    With ``n_init > 1`` several seedings are drawn from the same generator and
    the lowest final inertia is kept.
    """
    X = np.asarray(F.features, dtype=float).T
    T = X.shape[0]
    if not 1 <= k <= T:
        raise ValueError(f"k={k} must lie in [1, {T}]")
    rng = np.random.RandomState(seed)
    best = None
    for _ in range(max(n_init, 1)):
        centers, _ = kmeans_plusplus(X, k, random_state=rng)
        out = _lloyd(X, centers.astype(float), max_iter, tol)
        if best is None or out[2] < best[2]:
            best = out
    labels, centers, inertia, history, n_iter = best
    labels = _canonical_order(labels, k)
    centers_out = np.zeros((X.shape[1], k))
    for j in range(k):
        centers_out[:, j] = X[labels == j].mean(axis=0) if np.any(labels == j) else 0.0
    return ClusterResult(one_hot(labels, k), centers_out, inertia, history, n_iter)


def _canonical_order(labels, k):
    # renumber clusters by first appearance so ids do not depend on seeding order
    mapping = {}
    for lab in labels:
        if lab not in mapping:
            mapping[lab] = len(mapping)
    for j in range(k):
        mapping.setdefault(j, len(mapping))
    return np.array([mapping[v] for v in labels])


def estimate_num_operations(F: FeatureMatrix, k_range=(2, 12), seed=0, **kw):
    """Number of clusters maximizing the silhouette score over ``k_range``."""
    kmin, kmax = int(k_range[0]), int(k_range[-1])
    T = F.T
    if kmin < 2 or kmax > T - 1 or kmin > kmax:
        raise ValueError(f"k_range must lie within [2, {T - 1}]")
    X = np.asarray(F.features, dtype=float).T
    if np.allclose(X, X[0]):
        warnings.warn("features are all identical; returning the smallest k", RuntimeWarning,
                      stacklevel=2)
        return kmin
    best_k, best_s = kmin, -np.inf
    for k in range(kmin, kmax + 1):
        res = kmeans(F, k, seed=seed, **kw)
        vec = res.vector
        if np.unique(vec).size < 2:
            continue
        s = silhouette_score(X, vec)
        if s > best_s + 1e-12:
            best_k, best_s = k, s
    return best_k


def write_labels_csv(vec, path, extra=None):
    """Frame index and cluster id per row; ``extra`` adds named columns."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "cluster", *extra])
        for m, v in enumerate(vec):
            w.writerow([m, int(v), *(int(col[m]) for col in extra.values())])
