"""Vectorized BFGS for many small independent smooth problems.

Multi-start shift searches solve hundreds of 1-6 dimensional problems that
share one objective shape; running them as a batch keeps the per-iteration
Python overhead constant instead of linear in the number of starts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BatchResult", "bfgs_batch"]

_FLAT = 8 * np.finfo(float).eps


@dataclass
class BatchResult:
    x: np.ndarray
    fun: np.ndarray
    grad: np.ndarray
    nit: np.ndarray
    converged: np.ndarray
    failed: np.ndarray


def bfgs_batch(fun, x0, h0=None, gtol=1e-9, maxiter=200, c1=1e-4, max_backtrack=30):
    """Minimize ``B`` independent problems with BFGS and Armijo backtracking.

    Parameters
    ----------
    fun : callable
        ``fun(X, idx) -> (f, G)`` evaluating problems ``idx`` at points ``X``
        (shape ``(len(idx), d)``); returns values ``(len(idx),)`` and
        gradients ``(len(idx), d)``.
    x0 : ndarray, shape (B, d)
    h0 : ndarray, shape (B, d), optional
        Diagonal of the initial inverse-Hessian approximation.
    gtol : float
        Stop when the largest absolute gradient component is below ``gtol``.

    A problem whose objective is not finite at its start is marked failed.
    A problem whose line search cannot decrease the objective any further
    stops where it is.
    """
    x = np.array(x0, dtype=float)
    B, d = x.shape
    all_idx = np.arange(B)
    f, g = fun(x, all_idx)
    if h0 is None:
        h0 = np.ones((B, d))
    h0 = np.asarray(h0, dtype=float)
    H = np.zeros((B, d, d))
    H[:, np.arange(d), np.arange(d)] = h0
    nit = np.zeros(B, dtype=int)
    failed = ~np.isfinite(f) | ~np.all(np.isfinite(g), axis=1)
    converged = ~failed & (np.max(np.abs(g), axis=1) <= gtol)
    active = ~failed & ~converged
    eye = np.eye(d)

    for _ in range(maxiter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        gi, xi, fi = g[idx], x[idx], f[idx]
        p = -np.einsum("bij,bj->bi", H[idx], gi)
        slope = np.sum(p * gi, axis=1)
        bad = slope >= 0
        if np.any(bad):
            # lost descent direction: restart from the diagonal scaling
            Hb = np.zeros((bad.sum(), d, d))
            Hb[:, np.arange(d), np.arange(d)] = h0[idx[bad]]
            H[idx[bad]] = Hb
            p[bad] = -h0[idx[bad]] * gi[bad]
            slope[bad] = np.sum(p[bad] * gi[bad], axis=1)

        alpha = np.ones(idx.size)
        done = np.zeros(idx.size, dtype=bool)
        flat = np.zeros(idx.size, dtype=bool)
        x_new, f_new, g_new = xi.copy(), fi.copy(), gi.copy()
        for _ in range(max_backtrack):
            todo = np.flatnonzero(~done & ~flat)
            if todo.size == 0:
                break
            xt = xi[todo] + alpha[todo, None] * p[todo]
            ft, gt = fun(xt, idx[todo])
            finite = np.isfinite(ft) & np.all(np.isfinite(gt), axis=1)
            ok = finite & (ft <= fi[todo] + c1 * alpha[todo] * slope[todo])
            acc = todo[ok]
            x_new[acc], f_new[acc], g_new[acc] = xt[ok], ft[ok], gt[ok]
            done[acc] = True
            # both the predicted and the actual change are at rounding level:
            # the sufficient-decrease test can no longer tell steps apart
            tiny = _FLAT * np.abs(fi[todo])
            flat[todo[finite & ~ok & (np.abs(ft - fi[todo]) <= tiny)
                      & (np.abs(alpha[todo] * slope[todo]) <= tiny)]] = True
            alpha[todo[~ok]] *= 0.5

        stalled = ~done
        moved = np.flatnonzero(done)
        if moved.size:
            s = x_new[moved] - xi[moved]
            y = g_new[moved] - gi[moved]
            sy = np.sum(s * y, axis=1)
            upd = sy > 1e-16 * np.linalg.norm(s, axis=1) * np.linalg.norm(y, axis=1)
            if np.any(upd):
                k = moved[upd]
                rho = 1.0 / sy[upd]
                Hk = H[idx[k]]
                V = eye[None] - rho[:, None, None] * np.einsum("bi,bj->bij", s[upd], y[upd])
                Hk = np.einsum("bij,bjk,blk->bil", V, Hk, V)
                Hk += rho[:, None, None] * np.einsum("bi,bj->bij", s[upd], s[upd])
                H[idx[k]] = Hk
        x[idx], f[idx], g[idx] = x_new, f_new, g_new
        nit[idx[done]] += 1
        conv = np.max(np.abs(g_new), axis=1) <= gtol
        converged[idx[conv]] = True
        active[idx[conv | stalled]] = False

    return BatchResult(x, f, g, nit, converged, failed)
