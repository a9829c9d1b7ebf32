"""Regularized factorization cost and its landscape on a three-atom toy.

The full objective for a representation ``Lambda`` (column ``c`` lists the
coefficients used to rebuild atom ``c``) and shifts ``Delta`` is

    J = sum_c [ F_c + lam ||Lambda_c||_p + E ||Lambda_c||_p / ||C_c||^2
                + beta B(Lambda_c) + gamma ||Delta_c||^2 ] + L ||Lambda^T||_{2,p}

with ``F_c = ||C_c - sum_i Lambda[i, c] S(Delta[i, c]) C_i||^2`` and
``B(x) = ||1/2 - |x - 1/2| ||_2``. Only evaluation is provided; decompositions
are found greedily elsewhere.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .optim import bfgs_batch
from .resync import ShiftObjective, start_grid
from .spectral import CentroidSet, time_shift
from .synthgen import SourceModel, render_waveform

__all__ = [
    "RegParams",
    "REFERENCE_PARAMS",
    "CostBreakdown",
    "Landscape",
    "FAMILIES",
    "penalty_col",
    "penalty_triangle",
    "penalty_row",
    "penalty_binary",
    "cost_J",
    "optimal_shifts",
    "check_inequalities",
    "regularization_toy",
    "family_lambda",
    "landscape_grid",
]


@dataclass(frozen=True)
class RegParams:
    """Weights of the regularized objective. All zero by default."""

    lambda_col: float = 0.0
    triangle_weight: float = 0.0
    binary_weight: float = 0.0
    tikhonov: float = 0.0
    row_weight: float = 0.0
    norm_exponent: float = 1.0

    def __post_init__(self):
        for name in ("lambda_col", "triangle_weight", "binary_weight", "tikhonov", "row_weight"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.norm_exponent <= 1:
            raise ValueError("norm_exponent must lie in (0, 1]")

    def without(self, *names):
        """Copy with the named weights set to zero."""
        return replace(self, **{n: 0.0 for n in names})

    def to_dict(self):
        return asdict(self)


REFERENCE_PARAMS = RegParams(lambda_col=0.0225, triangle_weight=0.1, binary_weight=0.7,
                             tikhonov=1e-5, row_weight=3.43, norm_exponent=0.9)


def _lp(x, p):
    x = np.abs(np.asarray(x, dtype=float))
    if not np.any(x):
        return 0.0
    return float(np.sum(x ** p) ** (1.0 / p))


def penalty_col(lambda_c, p=1.0):
    """``l_p`` quasi-norm of a column."""
    return _lp(lambda_c, p)


def penalty_triangle(lambda_c, atom_energy, p=1.0):
    """Column ``l_p`` norm divided by the energy of the atom it rebuilds.

    Among equally sized decompositions this favours rebuilding the more
    energetic atom from weaker ones.
    """
    if not atom_energy > 0:
        raise ValueError("atom energy must be positive")
    return _lp(lambda_c, p) / float(atom_energy)


def penalty_row(Lambda, p=1.0):
    """``l_{2,p}`` over the rows of ``Lambda``, a proxy for the number of used atoms."""
    rows = np.linalg.norm(np.atleast_2d(np.asarray(Lambda, dtype=float)), axis=1)
    return _lp(rows, p)


def penalty_binary(lambda_c):
    """Euclidean distance-like penalty, zero exactly on binary vectors."""
    x = np.asarray(lambda_c, dtype=float)
    # 1/2 - |x - 1/2| equals min(x, 1 - x) for every real x; this form and the scaled
    # hypot keep tiny entries from rounding or underflowing to zero
    return math.hypot(*np.minimum(x, 1.0 - x).ravel())


@dataclass
class CostBreakdown:
    terms: dict  # weighted sums per term
    columns: dict  # unweighted per-column values
    total: float

    def to_dict(self):
        return {"total": self.total, "terms": self.terms,
                "columns": {k: v.tolist() for k, v in self.columns.items()}}


def _fit(C: CentroidSet, Delta, Lambda):
    W = C.W
    k = np.fft.fftfreq(W) * W
    out = np.empty(C.N)
    for c in range(C.N):
        ph = np.exp(-2j * np.pi * np.outer(k, Delta[:, c]) / W)
        r = C.atoms[:, c] - (C.atoms * ph) @ Lambda[:, c]
        out[c] = np.vdot(r, r).real
    return out


def cost_J(Delta, Lambda, C: CentroidSet, params: RegParams, fit=None) -> CostBreakdown:
    """Evaluate the regularized objective with a per-term breakdown.

    ``Delta[i, c]`` is the shift applied to atom ``i`` when rebuilding atom
    ``c``. ``fit`` may supply precomputed least-squares terms per column.
    """
    Lambda = np.asarray(Lambda, dtype=float)
    Delta = np.zeros_like(Lambda) if Delta is None else np.nan_to_num(np.asarray(Delta, float))
    if Lambda.shape != (C.N, C.N) or Delta.shape != Lambda.shape:
        raise ValueError(f"Lambda and Delta must be {C.N}x{C.N}")
    p = params.norm_exponent
    F = _fit(C, Delta, Lambda) if fit is None else np.asarray(fit, dtype=float)
    col = np.array([penalty_col(Lambda[:, c], p) for c in range(C.N)])
    tri = np.divide(col, C.energy, out=np.zeros(C.N), where=C.energy > 0)
    binary = np.array([penalty_binary(Lambda[:, c]) for c in range(C.N)])
    tik = np.sum(Delta ** 2, axis=0)
    row = penalty_row(Lambda, p)
    terms = {
        "fit": float(F.sum()),
        "col": params.lambda_col * float(col.sum()),
        "triangle": params.triangle_weight * float(tri.sum()),
        "binary": params.binary_weight * float(binary.sum()),
        "tikhonov": params.tikhonov * float(tik.sum()),
        "row": params.row_weight * row,
    }
    columns = {"fit": F, "col": col, "triangle": tri, "binary": binary, "tikhonov": tik}
    return CostBreakdown(terms, columns, float(sum(terms.values())))


def _column_shifts(C: CentroidSet, c, weights, gamma, per_atom=3, max_starts=27, chunk=8192,
                   gtol=1e-9, maxiter=200):
    """Best shifts for many coefficient settings of column ``c`` at once.

    Returns shifts ``(U, N)``, the least-squares fit ``(U,)`` and the
    regularized value ``(U,)``; the start with the lowest regularized value
    wins for every setting.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    U = weights.shape[0]
    support = np.flatnonzero(np.any(weights != 0, axis=0))
    shifts = np.zeros((U, C.N))
    y = C.atoms[:, c]
    if support.size == 0:
        e = float(np.vdot(y, y).real)
        return shifts, np.full(U, e), np.full(U, e)
    periods = np.where(np.isfinite(C.period[support]), C.period[support], C.W)
    starts = start_grid(periods, per_atom, max_starts)
    S, d = starts.shape
    w_all = np.repeat(weights[:, support], S, axis=0)
    x_all = np.tile(starts, (U, 1))
    fit = np.empty(U * S)
    reg = np.empty(U * S)
    x_out = np.empty_like(x_all)
    for lo in range(0, U * S, chunk):
        hi = min(lo + chunk, U * S)
        obj = ShiftObjective(y, C.atoms[:, support].T, w_all[lo:hi], gamma)
        res = bfgs_batch(obj, x_all[lo:hi], obj.diag_inverse_hessian(), gtol, maxiter)
        idx = np.arange(hi - lo)
        x_out[lo:hi] = res.x
        fit[lo:hi] = obj.residual(res.x, idx)
        reg[lo:hi] = fit[lo:hi] + gamma * np.sum(res.x ** 2, axis=1)
    reg = np.where(np.isfinite(reg), reg, np.inf).reshape(U, S)
    pick = np.argmin(reg, axis=1)
    rows = np.arange(U) * S + pick
    shifts[:, support] = x_out[rows]
    return shifts, fit[rows], reg[np.arange(U), pick]


def optimal_shifts(Lambda, C: CentroidSet, gamma=0.0, per_atom=3, max_starts=27):
    """Shift matrix minimizing ``F_c + gamma ||Delta_c||^2`` column by column."""
    Lambda = np.asarray(Lambda, dtype=float)
    Delta = np.zeros((C.N, C.N))
    fit = np.empty(C.N)
    for c in range(C.N):
        sh, f, _ = _column_shifts(C, c, Lambda[:, c][None, :], gamma, per_atom, max_starts)
        Delta[:, c] = sh[0]
        fit[c] = f[0]
    return Delta, fit


def check_inequalities(params: RegParams, C: CentroidSet, minimizers=None):
    """Check the two conditions that make the weights meaningful.

    The row-sparsity bound requires

        L > (lam + E / mu_min) * N * ||1_{N-1}||_p,   mu_min = min_c ||C_c||^2,

    so that adding a source always costs more than the column penalties of
    the largest decomposition. The center condition requires ``Lambda = 0``
    to cost more than every minimizer ``(Delta, Lambda)`` supplied (the
    identity representation by default), with the binarity term ignored.
    The reverse inequality is reported too, since that form would reject any
    sensible setting.
    """
    N = C.N
    if N < 2:
        raise ValueError("the inequalities need at least two atoms")
    p = params.norm_exponent
    mu_min = float(np.min(C.energy))
    bound = (params.lambda_col + params.triangle_weight / mu_min) * N * (N - 1) ** (1.0 / p)
    bound_ok = params.row_weight > bound

    if minimizers is None:
        minimizers = [(np.zeros((N, N)), np.eye(N))]
    no_binary = params.without("binary_weight")
    costs = []
    center = []
    for Delta, Lam in minimizers:
        Delta = np.zeros((N, N)) if Delta is None else np.nan_to_num(np.asarray(Delta, float))
        costs.append(cost_J(Delta, Lam, C, no_binary).total)
        center.append(cost_J(Delta, np.zeros((N, N)), C, no_binary).total)
    margins = [z - m for z, m in zip(center, costs)]
    center_ok = bool(all(m > 0 for m in margins))
    return {
        "mu_min": mu_min,
        "n_atoms": N,
        "row_bound": {
            "value": float(bound),
            "row_weight": params.row_weight,
            "margin": float(params.row_weight - bound),
            "passed": bool(bound_ok),
        },
        "center": {
            "center_costs": [float(v) for v in center],
            "minimizer_costs": [float(v) for v in costs],
            "margins": [float(m) for m in margins],
            "passed": center_ok,
            "reverse_inequality_holds": bool(all(m < 0 for m in margins)),
            "note": "checked as J(Delta, 0) > J(Delta, Lambda_opt); the reverse form is reported "
                    "only for comparison",
        },
        "valid": bool(bound_ok and center_ok),
    }


def regularization_toy(W=32):
    """Atoms of the sequence a, b, ab on one period of ``W`` samples.

    ``a`` is a unit-peak triangle and ``b`` a unit-peak square, both sampled
    from sine phase so that only odd harmonics are present (half a period
    negates them exactly). ``ab = S(W/4) a + S(W/3) b``. Atom energies are
    left unnormalized (about ``W^2/3`` and ``W^2``).
    """
    if W < 8 or W % 2:
        raise ValueError("W must be an even number >= 8")
    a = render_waveform(SourceModel("triangle", 1.0 / W, 1.0), W, 1.0).samples
    b = render_waveform(SourceModel("square", 1.0 / W, 1.0), W, 1.0).samples
    A, B = np.fft.fft(a), np.fft.fft(b)
    AB = time_shift(A, W / 4) + time_shift(B, W / 3)
    return CentroidSet.from_atoms(np.stack([A, B, AB], axis=1))


def _a2(c1, c2):
    return [[1, 0, c1], [0, 1, c1], [0, 0, c2]]


def _a3(c1, c2):
    return [[1, 0, 0], [0, 1, 0], [0, 0, (c1 + c2) / 2]]


def _a4(c1, c2):
    return [[1, c1, 0], [0, 0, 0], [0, c2, 1]]


def _a5(c1, c2):
    return [[0, 0, 0], [c2, 1, 0], [c1, 0, 1]]


# ab from a and b; ab from itself; b from a and ab; a from b and ab
FAMILIES = {"A2": _a2, "A3": _a3, "A4": _a4, "A5": _a5}


def family_lambda(family, c1, c2):
    """Representation of the three-atom toy for one parameterization."""
    try:
        fn = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}") from None
    return np.array(fn(c1, c2), dtype=float)


@dataclass
class Landscape:
    family: str
    c1: np.ndarray
    c2: np.ndarray
    J: np.ndarray  # (len(c1), len(c2))
    terms: dict = field(default_factory=dict)  # same-shaped grid per weighted term
    shifts: np.ndarray = None  # (len(c1) * len(c2), 3, 3) optimal shifts per point
    fit: np.ndarray = None  # (len(c1) * len(c2), 3) least-squares term per column
    tikhonov: float = 0.0  # shift weight the shifts were optimized with

    @property
    def argmin(self):
        i, j = np.unravel_index(np.argmin(self.J), self.J.shape)
        return float(self.c1[i]), float(self.c2[j])

    @property
    def minimum(self):
        return float(self.J.min())

    def minima(self, atol=0.0):
        """Grid points whose cost is within ``atol`` of the grid minimum."""
        ii, jj = np.nonzero(self.J <= self.J.min() + atol)
        return [(float(self.c1[i]), float(self.c2[j])) for i, j in zip(ii, jj)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["c1", "c2", "J"])
            for i, a in enumerate(self.c1):
                for j, b in enumerate(self.c2):
                    w.writerow([repr(float(a)), repr(float(b)), repr(float(self.J[i, j]))])


def landscape_grid(family, C: CentroidSet, params: RegParams, c1_range=(-0.5, 1.5),
                   c2_range=(-0.5, 1.5), resolution=41, per_atom=3, reuse=None) -> Landscape:
    """Cost over a ``(c1, c2)`` grid with shifts optimal at every point.

    Shifts are optimized column by column for every distinct column value
    seen on the grid (the regularized fit, with ``params.tikhonov``), then
    the full cost is evaluated point by point. ``reuse`` takes a previous
    landscape of the same family and grid whose shifts were optimized with
    the same Tikhonov weight, so that other weights can be varied cheaply.
    """
    if C.N != 3:
        raise ValueError("landscapes are defined on the three-atom toy")
    c1 = np.linspace(*c1_range, resolution)
    c2 = np.linspace(*c2_range, resolution)
    grid = np.array([[family_lambda(family, a, b) for b in c2] for a in c1])  # (R1, R2, 3, 3)
    flat = grid.reshape(-1, 3, 3)
    P = flat.shape[0]
    if (reuse is not None and reuse.family == family and reuse.tikhonov == params.tikhonov
            and np.array_equal(reuse.c1, c1) and np.array_equal(reuse.c2, c2)):
        Delta, fit = reuse.shifts, reuse.fit
    else:
        Delta = np.zeros((P, 3, 3))
        fit = np.zeros((P, 3))
        for c in range(3):
            uniq, inv = np.unique(flat[:, :, c], axis=0, return_inverse=True)
            sh, f, _ = _column_shifts(C, c, uniq, params.tikhonov, per_atom)
            inv = inv.reshape(-1)
            Delta[:, :, c] = sh[inv]
            fit[:, c] = f[inv]
    J = np.empty(P)
    terms = {}
    for q in range(P):
        br = cost_J(Delta[q], flat[q], C, params, fit=fit[q])
        J[q] = br.total
        for k, v in br.terms.items():
            terms.setdefault(k, np.empty(P))[q] = v
    shape = (c1.size, c2.size)
    return Landscape(family, c1, c2, J.reshape(shape), {k: v.reshape(shape) for k, v in terms.items()},
                     Delta, fit, params.tikhonov)
