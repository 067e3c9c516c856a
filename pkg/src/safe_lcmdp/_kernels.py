"""Tight numerical kernels, JIT-compiled when numba is available.

The state-action grids here are tiny (tens of entries), so interpreter and
numpy dispatch overhead dominates the raw arithmetic.  Each kernel has a pure
numpy twin used when numba is missing; both paths are exercised by tests.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def chol_update_inplace(L: np.ndarray, x: np.ndarray) -> None:
    """Rank-one Cholesky update: L L^T + x x^T, sequential column algorithm."""
    d = L.shape[0]
    for i in range(d):
        lii = L[i, i]
        xi = x[i]
        r = np.hypot(lii, xi)
        c = r / lii
        s = xi / lii
        L[i, i] = r
        for j in range(i + 1, d):
            L[j, i] = (L[j, i] + s * x[j]) / c
            x[j] = c * x[j] - s * L[j, i]


@njit(cache=True)
def lower_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve L Y = B for lower-triangular L; B has shape (d, m)."""
    d, m = B.shape
    Y = np.empty((d, m))
    for col in range(m):
        for i in range(d):
            acc = B[i, col]
            for j in range(i):
                acc -= L[i, j] * Y[j, col]
            Y[i, col] = acc / L[i, i]
    return Y


@njit(cache=True)
def chol_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve (L L^T) X = B via forward then backward substitution."""
    d, m = B.shape
    Y = lower_solve(L, B)
    X = np.empty((d, m))
    for col in range(m):
        for i in range(d - 1, -1, -1):
            acc = Y[i, col]
            for j in range(i + 1, d):
                acc -= L[j, i] * X[j, col]
            X[i, col] = acc / L[i, i]
    return X


@njit(cache=True)
def composite_backward(
    flat_features: np.ndarray,  # (S*A, d)
    solved: np.ndarray,         # (H, d, S): Lambda_h^{-1} M_h^T, zeros when no data
    bonus_in: np.ndarray,       # (H, S, A, 3) additive terms inside the clip
    base_out: np.ndarray,       # (H, S, A, 3) additive terms outside the clip
    clip_hi: np.ndarray,        # (H, 3) upper clip bounds
    lam: float,
    kappa: float,
):
    """Backward pass of the three clipped heads and their composite softmax.

    Returns (weights (H, d, 3), probs (H, S, A), v0 (S, 3)); head order is
    (reward, utility, compensation).
    """
    H, S, A, _ = bonus_in.shape
    d = flat_features.shape[1]
    weights = np.zeros((H, d, 3))
    probs = np.empty((H, S, A))
    values = np.zeros((S, 3))
    q = np.empty((A, 3))
    zs = np.empty(A)
    inv_kappa = 1.0 / kappa
    for h in range(H - 1, -1, -1):
        if h < H - 1:
            for i in range(d):
                for g in range(3):
                    acc = 0.0
                    for s in range(S):
                        acc += solved[h, i, s] * values[s, g]
                    weights[h, i, g] = acc
        for s in range(S):
            for a in range(A):
                row = s * A + a
                for g in range(3):
                    acc = 0.0
                    for i in range(d):
                        acc += flat_features[row, i] * weights[h, i, g]
                    x = acc + bonus_in[h, s, a, g]
                    if x < 0.0:
                        x = 0.0
                    hi = clip_hi[h, g]
                    if x > hi:
                        x = hi
                    q[a, g] = x + base_out[h, s, a, g]
            m = -np.inf
            for a in range(A):
                z = (q[a, 0] + lam * q[a, 1] + q[a, 2]) * inv_kappa
                zs[a] = z
                if z > m:
                    m = z
            se = 0.0
            for a in range(A):
                se += np.exp(zs[a] - m)
            log_se = np.log(se)
            vr = 0.0
            vu = 0.0
            vd = 0.0
            for a in range(A):
                log_p = zs[a] - m - log_se
                p = np.exp(log_p)
                probs[h, s, a] = p
                vr += p * (q[a, 0] - kappa * log_p)
                vu += p * q[a, 1]
                vd += p * q[a, 2]
            values[s, 0] = vr
            values[s, 1] = vu
            values[s, 2] = vd
    return weights, probs, values
