"""Greedy selection of decompositions and recovery of source activations."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .resync import CellStatus, ResidualMatrix, ResyncConfig, ResyncProblem, multistart
from .spectral import CentroidSet

__all__ = [
    "Representation",
    "SourceCatalog",
    "greedy_select",
    "recover_activations",
    "merge_configurations",
    "unmerged_catalog",
    "tau_sweep",
    "write_matrix_csv",
    "write_activations_csv",
]


@dataclass
class Representation:
    """Outcome of the greedy selection.

    ``lam[i, c]`` is the multiplicity of irreducible atom ``i`` in operation
    ``c`` after expansion; ``combo[:, c]`` is the combination actually
    selected for ``c`` (constituents may themselves be decomposed) and
    ``shifts[:, c]`` the matching time shifts.
    """

    lam: np.ndarray
    combo: np.ndarray
    shifts: np.ndarray
    residual: np.ndarray
    chosen: np.ndarray
    irreducible: list
    base: int = 2
    tau: float = np.inf
    order: list = field(default_factory=list)

    @property
    def N(self):
        return self.lam.shape[0]

    @property
    def n_sources(self):
        return len(self.irreducible)

    def decomposed(self):
        return [c for c in range(self.N) if c not in self.irreducible]


@dataclass
class SourceCatalog:
    groups: list  # irreducible atom indices merged into each source
    mapping: dict  # operation -> {source: multiplicity}
    merges: list  # (atom_i, atom_j, residual) pairs found within tau

    @property
    def n_sources(self):
        return len(self.groups)


def greedy_select(R: ResidualMatrix, tau: float) -> Representation:
    """Pick the smallest admissible decomposition of every operation.

    Operations are visited by increasing energy, so that likely constituents
    are settled before the composites built from them. A combination is
    admissible when it was computed, its residual is within ``tau`` and every
    constituent has already been visited; in base 2 its expansion must also
    stay binary. Among admissible combinations the smallest total
    multiplicity wins, then the lowest residual, then the lowest index.
    Operations without one become irreducible sources.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    N, G, b = R.N, R.values.shape[1], R.base
    order = [int(c) for c in np.lexsort((np.arange(N), R.energy))]
    lam = np.zeros((N, N), dtype=int)
    combo = np.zeros((N, N), dtype=int)
    shifts = np.full((N, N), np.nan)
    residual = np.full(N, np.nan)
    chosen = np.full(N, -1)
    irreducible = []
    visited = np.zeros(N, dtype=bool)

    for c in order:
        best = None
        for g in range(1, G):
            if R.status[c, g] != CellStatus.COMPUTED:
                continue
            r = R.values[c, g]
            if not r <= tau:
                continue
            d = R.digits(g)
            members = np.flatnonzero(d)
            if not np.all(visited[members]):
                continue
            col = lam[:, members] @ d[members]
            if b == 2 and col.max() > 1:
                continue
            key = (int(d.sum()), float(r), g)
            if best is None or key < best[0]:
                best = (key, g, d, col)
        if best is None:
            irreducible.append(c)
            lam[c, c] = combo[c, c] = 1
            shifts[c, c] = 0.0
            residual[c] = 0.0
        else:
            (_, r, g), _, d, col = best
            lam[:, c] = col
            combo[:, c] = d
            shifts[:, c] = R.shifts[c, g]
            residual[c] = r
            chosen[c] = g
        visited[c] = True
    return Representation(lam, combo, shifts, residual, chosen, sorted(irreducible), b, tau, order)


def merge_configurations(rep: Representation, C: CentroidSet, tau=None,
                         cfg: ResyncConfig | None = None) -> SourceCatalog:
    """Group irreducible atoms that are time-shifted copies of each other.

    Two irreducible atoms whose one-to-one resynchronized residual is within
    ``tau`` (default: the selection threshold) are the same operation seen in
    different phase configurations and become one source.
    """
    cfg = cfg or ResyncConfig()
    tau = rep.tau if tau is None else tau
    irr = list(rep.irreducible)
    parent = {i: i for i in irr}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    merges = []
    for a_pos, i in enumerate(irr):
        for j in irr[a_pos + 1:]:
            # reconstruct the more energetic atom from the weaker one
            hi, lo = (i, j) if C.energy[i] >= C.energy[j] else (j, i)
            r, _ = multistart(C, ResyncProblem(hi, (lo,), gamma=cfg.gamma), cfg.starts_per_atom, cfg)
            if r <= tau:
                merges.append((i, j, float(r)))
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    roots = sorted({find(i) for i in irr})
    groups = [[i for i in irr if find(i) == root] for root in roots]
    where = {i: s for s, grp in enumerate(groups) for i in grp}
    mapping = {}
    for c in range(rep.N):
        m = {}
        for i in np.flatnonzero(rep.lam[:, c]):
            s = where[int(i)]
            m[s] = m.get(s, 0) + int(rep.lam[i, c])
        mapping[c] = m
    return SourceCatalog(groups, mapping, merges)


def unmerged_catalog(rep: Representation) -> SourceCatalog:
    """Catalog with one source per irreducible atom."""
    where = {i: s for s, i in enumerate(rep.irreducible)}
    mapping = {c: {where[int(i)]: int(rep.lam[i, c]) for i in np.flatnonzero(rep.lam[:, c])}
               for c in range(rep.N)}
    return SourceCatalog([[i] for i in rep.irreducible], mapping, [])


def recover_activations(rep: Representation, L, catalog: SourceCatalog | None = None):
    """Source activations ``Lambda @ L`` restricted to the sources.

    ``L`` is the one-hot ``(N, T)`` sub-operation label matrix (all-zero
    columns for unlabeled frames). Without a catalog there is one row per
    irreducible atom; with one, rows of merged atoms are summed. Base-2
    results are clipped to 0/1, larger bases keep multiplicities.
    """
    L = np.asarray(L)
    if L.shape[0] != rep.N:
        raise ValueError(f"label matrix has {L.shape[0]} rows, representation has {rep.N}")
    groups = catalog.groups if catalog is not None else [[i] for i in rep.irreducible]
    rows = np.array([rep.lam[grp].sum(axis=0) for grp in groups]).reshape(len(groups), rep.N)
    act = rows @ L
    if rep.base == 2:
        act = np.minimum(act, 1)
    return act.astype(int)


def tau_sweep(R: ResidualMatrix, taus):
    """Number of sources and mean accepted residual for every threshold."""
    out = []
    for tau in taus:
        rep = greedy_select(R, tau)
        dec = rep.decomposed()
        mean = float(np.mean(rep.residual[dec])) if dec else 0.0
        out.append((float(tau), rep.n_sources, mean))
    return out


def write_matrix_csv(M, path, row_label="row", col_prefix="col"):
    M = np.asarray(M)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([row_label, *(f"{col_prefix}_{j}" for j in range(M.shape[1]))])
        for i, row in enumerate(M):
            w.writerow([i, *(repr(v.item()) if isinstance(v, np.floating) else int(v) for v in row)])


def write_activations_csv(act, path, starts=None):
    act = np.asarray(act)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["frame"] + (["start_sample"] if starts is not None else [])
        w.writerow(head + [f"source_{s}" for s in range(act.shape[0])])
        for m in range(act.shape[1]):
            lead = [m] + ([int(starts[m])] if starts is not None else [])
            w.writerow(lead + [int(v) for v in act[:, m]])
