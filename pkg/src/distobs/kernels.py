"""Hot numeric loops, jitted when the accelerator is available.

Set ``DISTOBS_DISABLE_NUMBA=1`` (or ``true``/``yes``) to force the pure
numpy implementations; ``NUMBA_ENABLED`` reports which path is active.
Both paths run the same statements over the same BLAS calls, so results
are bitwise identical.
"""

from __future__ import annotations

import os

import numpy as np


def _affine_iterate(M, W, U, s0, overflow):
    """Iterate s(t+1) = M s(t) + W u(t), recording every state.

    Returns the (T+1, D) history and the first step whose max-norm
    exceeded ``overflow`` (-1 if none; iteration stops there).
    """
    T = U.shape[0]
    D = s0.shape[0]
    out = np.zeros((T + 1, D))
    out[0] = s0
    bad = -1
    for t in range(T):
        s = M @ out[t] + W @ U[t]
        out[t + 1] = s
        if np.max(np.abs(s)) > overflow:
            bad = t + 1
            break
    return out, bad


def _dare_fixed_point(F, H, tol, max_iter):
    """Fixed-point iteration for the filter Riccati equation.

    Unit state and output weights, started from the identity.  Returns
    ``(P, iterations, last_delta)``; convergence is reached when the
    max-norm update drops below ``tol``.
    """
    z = F.shape[0]
    p = H.shape[0]
    P = np.eye(z)
    Q = np.eye(z)
    R = np.eye(p)
    delta = np.inf
    iters = 0
    while iters < max_iter:
        FP = F @ P
        G = FP @ H.T
        S = H @ P @ H.T + R
        Pn = FP @ F.T - G @ np.linalg.solve(S, G.T) + Q
        Pn = 0.5 * (Pn + Pn.T)
        delta = np.max(np.abs(Pn - P))
        P = Pn
        iters += 1
        if delta < tol:
            break
    return P, iters, delta


def _env_disabled():
    return os.environ.get("DISTOBS_DISABLE_NUMBA", "").strip().lower() in (
        "1",
        "true",
        "yes",
    )


NUMBA_ENABLED = False
affine_iterate = _affine_iterate
dare_fixed_point = _dare_fixed_point

if not _env_disabled():
    try:
        import numba

        affine_iterate = numba.njit(cache=True)(_affine_iterate)
        dare_fixed_point = numba.njit(cache=True)(_dare_fixed_point)
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - depends on environment
        pass
