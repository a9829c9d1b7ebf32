"""Phase resynchronization of atom combinations and the residual matrix.

The residual of a combination is the best squared error reachable when every
constituent atom may be shifted in time independently,

    r = min over shifts of || C_c - sum_i m_i S(shift_i) C_i ||^2,

searched by BFGS from a grid of starting shifts. A small Tikhonov term on the
shifts only selects the smallest representative among periodic copies; the
value reported is always the plain least-squares residual.
"""
from __future__ import annotations

import csv
import itertools
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .optim import bfgs_batch
from .spectral import CentroidSet, bin_frequencies

__all__ = [
    "ResyncConfig",
    "ResyncProblem",
    "CellStatus",
    "ResidualMatrix",
    "ShiftObjective",
    "minimize_shifts",
    "start_grid",
    "resync_residual",
    "multistart",
    "build_residual_matrix",
    "combination_digits",
    "combination_index",
    "enumeration_order",
    "modulus_residual",
    "reconstruction_error",
]

log = logging.getLogger(__name__)


@dataclass
class ResyncConfig:
    gamma: float = 1e-5
    starts_per_atom: int = 3
    max_starts: int = 81
    gtol: float = 1e-9
    maxiter: int = 200
    tie_rtol: float = 1e-9
    early_exit: bool = False


@dataclass
class ResyncProblem:
    target: int
    candidates: tuple
    multiplicities: tuple = None
    initial: np.ndarray = None
    gamma: float = 1e-5

    def __post_init__(self):
        self.candidates = tuple(int(i) for i in self.candidates)
        if not self.candidates:
            raise ValueError("a resynchronization problem needs at least one candidate atom")
        if self.target in self.candidates:
            raise ValueError("the target atom cannot be one of its own candidates")
        if self.multiplicities is None:
            self.multiplicities = (1,) * len(self.candidates)
        if self.initial is None:
            self.initial = np.zeros(len(self.candidates))
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")


class CellStatus(str, Enum):
    COMPUTED = "computed"
    PRUNED_TRIANGLE = "pruned_triangle"
    PRUNED_ENERGY = "pruned_energy"
    PRUNED_SELF = "pruned_self"
    TRIVIAL_ZERO = "trivial_zero"
    SELF_NORM = "self_norm"
    SKIPPED = "skipped"
    FAILED = "failed"

    def __str__(self):
        # numpy stores statuses as plain strings through str()
        return self.value


class ShiftObjective:
    """Batched ``(||y - sum_i w_i S(x_i) A_i||^2 + gamma ||x||^2) / scale``.

    ``weights`` holds one row of real coefficients per problem so that many
    coefficient settings (or many starts) can be evaluated together. When the
    target and atoms are spectra of real signals only the non-negative bins
    are kept, with mirrored bins counted twice.
    """

    def __init__(self, target, atoms, weights, gamma=0.0, scale=None):
        y = np.asarray(target, dtype=complex)
        A = np.atleast_2d(np.asarray(atoms, dtype=complex))  # (d, W)
        self.w = np.atleast_2d(np.asarray(weights, dtype=float))  # (B, d)
        W = y.shape[0]
        omega = 2 * np.pi * bin_frequencies(W) / W
        if scale is None:
            scale = max(np.vdot(y, y).real, float(np.max(np.sum(np.abs(A) ** 2, axis=1))), 1e-300)
        self.scale = float(scale)
        self.gamma = float(gamma)
        if _mirrored(np.vstack([y[None, :], A])):
            keep = np.arange(W // 2 + 1)
            mult = np.full(keep.size, 2.0)
            mult[0] = 1.0
            if W % 2 == 0:
                mult[-1] = 1.0
        else:
            keep, mult = np.arange(W), np.ones(W)
        self.y, self.A, self.omega, self.mult = y[keep], A[:, keep], omega[keep], mult

    def shifted(self, X, idx):
        ph = np.exp(-1j * X[:, :, None] * self.omega[None, None, :])
        return self.w[idx][:, :, None] * self.A[None, :, :] * ph  # (n, d, K)

    def residual(self, X, idx):
        r = self.y[None, :] - self.shifted(X, idx).sum(axis=1)
        return (r.real ** 2 + r.imag ** 2) @ self.mult

    def __call__(self, X, idx):
        sh = self.shifted(X, idx)
        r = self.y[None, :] - sh.sum(axis=1)
        f = (r.real ** 2 + r.imag ** 2) @ self.mult + self.gamma * np.sum(X ** 2, axis=1)
        # d r / d x_i = 1j * omega * w_i S(x_i) A_i
        g = 2 * np.real(np.einsum("nk,ndk->nd", np.conj(r) * self.mult, 1j * self.omega * sh))
        g += 2 * self.gamma * X
        return f / self.scale, g / self.scale

    def diag_inverse_hessian(self):
        curv = 2 * (self.w ** 2) * ((np.abs(self.A) ** 2 * self.mult) @ self.omega ** 2)[None, :]
        curv = (curv + 2 * self.gamma) / self.scale
        return np.where(curv > 0, 1.0 / np.maximum(curv, 1e-300), 1.0)


def _mirrored(V, rtol=1e-12):
    # bins k and W-k conjugate for every row (DC and Nyquist are used as they are)
    W = V.shape[1]
    k = np.arange(1, (W + 1) // 2)
    if k.size == 0:
        return False
    gap = np.max(np.abs(V[:, W - k] - np.conj(V[:, k])))
    return bool(gap <= rtol * max(np.max(np.abs(V)), 1e-300))


def start_grid(periods, per_atom=3, cap=81):
    """Cartesian grid of starting shifts, ``per_atom`` values per period.

    Values are centred in ``[-T/2, T/2)`` and include 0 for odd counts. The
    per-atom count is reduced when the product would exceed ``cap``.
    """
    periods = np.asarray(periods, dtype=float)
    d = periods.size
    n = max(int(per_atom), 1)
    if n ** d > cap:
        coarse = max(int(np.floor(cap ** (1.0 / d) + 1e-9)), 1)
        warnings.warn(f"start grid {n}^{d} exceeds cap {cap}; using {coarse} per atom",
                      RuntimeWarning, stacklevel=2)
        n = coarse
    offsets = (np.arange(n) - (n - 1) / 2) / n
    axes = [offsets * T for T in periods]
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, d)


def minimize_shifts(target, atoms, weights, starts, gamma=0.0, cfg: ResyncConfig | None = None):
    """Run BFGS from every start; return ``(best_residual, best_shifts, result)``.

    The best start has the lowest unregularized residual; residuals within
    ``tie_rtol`` of it are considered tied and the smallest-norm shift wins.
    """
    cfg = cfg or ResyncConfig()
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    B = starts.shape[0]
    w = np.broadcast_to(np.asarray(weights, dtype=float), (B, starts.shape[1]))
    obj = ShiftObjective(target, atoms, w, gamma)
    res = bfgs_batch(obj, starts, obj.diag_inverse_hessian(), cfg.gtol, cfg.maxiter)
    ok = ~res.failed
    if not np.any(ok):
        return np.nan, np.full(starts.shape[1], np.nan), res
    resid = np.full(B, np.inf)
    resid[ok] = obj.residual(res.x[ok], np.flatnonzero(ok))
    best = np.min(resid)
    tied = np.flatnonzero(resid <= best + cfg.tie_rtol * obj.scale)
    pick = tied[np.argmin(np.sum(res.x[tied] ** 2, axis=1))]
    return float(resid[pick]), res.x[pick].copy(), res


def _problem_parts(C: CentroidSet, prob: ResyncProblem):
    atoms = C.atoms[:, list(prob.candidates)].T
    periods = np.array([C.period[i] if np.isfinite(C.period[i]) else C.W for i in prob.candidates])
    return C.atoms[:, prob.target], atoms, np.asarray(prob.multiplicities, float), periods


def resync_residual(C: CentroidSet, prob: ResyncProblem, cfg: ResyncConfig | None = None):
    """Single BFGS run from ``prob.initial``; returns ``(residual, shifts)``."""
    y, atoms, w, _ = _problem_parts(C, prob)
    r, x, _ = minimize_shifts(y, atoms, w, prob.initial[None, :], prob.gamma, cfg)
    if not np.isfinite(r):
        raise FloatingPointError("resynchronization objective is not finite at the start point")
    return r, x


def multistart(C: CentroidSet, prob: ResyncProblem, starts_per_atom=3, cfg: ResyncConfig | None = None):
    """BFGS from a grid of starts over one estimated period per candidate atom."""
    cfg = cfg or ResyncConfig()
    y, atoms, w, periods = _problem_parts(C, prob)
    starts = start_grid(periods, starts_per_atom, cfg.max_starts)
    r, x, _ = minimize_shifts(y, atoms, w, starts, prob.gamma, cfg)
    return r, x


def combination_digits(g, base, N):
    """Multiplicity of each atom encoded by combination index ``g``."""
    d = np.zeros(N, dtype=int)
    for i in range(N):
        g, d[i] = divmod(g, base)
    return d


def combination_index(digits, base):
    return int(sum(int(m) * base ** i for i, m in enumerate(digits)))


def enumeration_order(N, base):
    """All combination indices by increasing number of atoms, then index."""
    G = base ** N
    pop = [int(np.count_nonzero(combination_digits(g, base, N))) for g in range(G)]
    return sorted(range(G), key=lambda g: (pop[g], g))


@dataclass
class ResidualMatrix:
    values: np.ndarray  # (N, base**N)
    status: np.ndarray  # (N, base**N) CellStatus values as strings
    shifts: np.ndarray  # (N, base**N, N), nan where an atom is unused
    base: int
    energy: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def N(self):
        return self.values.shape[0]

    def digits(self, g):
        return combination_digits(g, self.base, self.N)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["operation", "combination", "atoms", "value", "status"])
            for c in range(self.N):
                for g in range(self.values.shape[1]):
                    d = self.digits(g)
                    atoms = ";".join(f"{i}x{m}" if m > 1 else str(i) for i, m in enumerate(d) if m)
                    w.writerow([c, g, atoms, repr(float(self.values[c, g])), str(self.status[c, g])])


def build_residual_matrix(C: CentroidSet, base_b=2, tau=np.inf, cfg: ResyncConfig | None = None):
    """Residual of every (operation, combination) pair, with pruning.

    Row ``c`` and combination ``g`` (base-``b`` digits = multiplicities):

    * ``g = 0`` holds ``||C_c||^2``;
    * ``g`` = atom ``c`` alone is the trivial decomposition, value 0;
    * combinations containing ``c`` together with anything else are pruned;
    * ``||C_c|| > sum_i m_i ||C_i||`` prunes by the triangle inequality;
    * ``||C_c||^2 < max_i ||C_i||^2`` prunes by energy ordering;
    * everything else is resynchronized by multi-start BFGS.

    With ``cfg.early_exit`` a row stops once some combination of the current
    size has a residual within ``tau``; larger combinations are ``skipped``.
    Pruned and skipped cells hold ``+inf``.
    """
    cfg = cfg or ResyncConfig()
    N = C.N
    if N < 1:
        raise ValueError("a residual matrix needs at least one atom")
    if base_b < 2:
        raise ValueError("base must be at least 2")
    G = base_b ** N
    values = np.full((N, G), np.inf)
    status = np.full((N, G), CellStatus.SKIPPED.value, dtype="<U16")
    shifts = np.full((N, G, N), np.nan)
    energy = C.energy.copy()
    norms = np.sqrt(energy)
    order = enumeration_order(N, base_b)
    notes = []

    for c in range(N):
        found_at = None
        for g in order:
            d = combination_digits(g, base_b, N)
            members = np.flatnonzero(d)
            size = members.size
            if found_at is not None and size > found_at:
                break  # remaining cells stay 'skipped'
            if g == 0:
                values[c, g], status[c, g] = energy[c], CellStatus.SELF_NORM
                continue
            if d[c]:
                if size == 1 and d[c] == 1:
                    values[c, g], status[c, g] = 0.0, CellStatus.TRIVIAL_ZERO
                    shifts[c, g, c] = 0.0
                else:
                    status[c, g] = CellStatus.PRUNED_SELF
                continue
            if norms[c] > np.sum(d * norms):
                status[c, g] = CellStatus.PRUNED_TRIANGLE
                continue
            if energy[c] < np.max(energy[members]):
                status[c, g] = CellStatus.PRUNED_ENERGY
                continue
            prob = ResyncProblem(c, tuple(members), tuple(d[members]), gamma=cfg.gamma)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                r, x = multistart(C, prob, cfg.starts_per_atom, cfg)
            notes.extend(f"row {c}, g {g}: {w.message}" for w in caught)
            if not np.isfinite(r):
                status[c, g] = CellStatus.FAILED
                values[c, g] = np.nan
                continue
            values[c, g], status[c, g] = r, CellStatus.COMPUTED
            shifts[c, g, members] = x
            if cfg.early_exit and r <= tau and found_at is None:
                found_at = size
    for msg in notes:
        log.warning(msg)
    return ResidualMatrix(values, status, shifts, base_b, energy, notes)


def modulus_residual(C: CentroidSet, target, members, multiplicities=None):
    """Phase-blind counterpart ``|| |C_c| - sum_i m_i |C_i| ||^2``."""
    members = list(members)
    m = np.ones(len(members)) if multiplicities is None else np.asarray(multiplicities, float)
    approx = np.abs(C.atoms[:, members]) @ m
    return float(np.sum((np.abs(C.atoms[:, target]) - approx) ** 2))


def reconstruction_error(C: CentroidSet, target, coefficients, shifts):
    """``|| C_c - sum_i coef_i S(shift_i) C_i ||^2`` for explicit shifts."""
    coefficients = np.asarray(coefficients, dtype=float)
    shifts = np.nan_to_num(np.asarray(shifts, dtype=float))
    W = C.W
    omega = 2 * np.pi * bin_frequencies(W) / W
    approx = (C.atoms * np.exp(-1j * np.outer(omega, shifts))) @ coefficients
    r = C.atoms[:, target] - approx
    return float(np.vdot(r, r).real)
