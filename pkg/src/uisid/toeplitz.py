"""Lower-triangular Toeplitz convolution algebra.

A causal FIR convolution ``y = w * g`` is the matrix product ``T(w) g``
where ``T(w)`` is the lower-triangular Toeplitz matrix of ``w``.  The
product commutes, ``T(w) g = T(g) w``, which the whole estimation stack
leans on.  :func:`shifted_sum_contraction` computes the second-moment
contraction ``E{T(x)^T T(x)}`` for a random vector ``x`` without ever
materializing the sparse selector that defines it (that selector is an
``n x n^2`` monster kept only as a test oracle).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla


def toeplitz(v: np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    """N x n lower-triangular Toeplitz matrix of the vector v.

    Entry (i, j) is ``v[i - j]`` (0-based) when that index exists, else 0;
    column j is v shifted down by j positions.  A v shorter than n_rows is
    zero padded, a longer one is truncated.
    """
    if n_rows < 1 or n_cols < 1:
        raise ValueError("Toeplitz dimensions must be at least 1")
    v = np.asarray(v, dtype=float).ravel()
    col = np.zeros(n_rows)
    m = min(len(v), n_rows)
    col[:m] = v[:m]
    return sla.toeplitz(col, np.zeros(n_cols))


def commute(w: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Truncated convolution T(w) g of two equal-length signals.

    Equals T(g) w up to floating-point summation order; tests assert the
    symmetry at 1e-12 relative.
    """
    w = np.asarray(w, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if len(w) != len(g):
        raise ValueError(f"signal lengths differ: {len(w)} vs {len(g)}")
    n = len(w)
    return toeplitz(w, n, n) @ g


def convolve_truncated(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Truncated convolution for possibly batched signals.

    Both arguments may be (n,) or (batch, n); the result matches T(x) h
    row-wise.  Used for sample moments and dataset generation where
    building a Toeplitz matrix per particle would dominate.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if x.shape[-1] != h.shape[-1]:
        raise ValueError("signal lengths differ")
    x, h = np.broadcast_arrays(x, h)
    n = x.shape[-1]
    out = np.zeros_like(x)
    for k in range(n):
        out[:, k:] += h[:, k : k + 1] * x[:, : n - k]
    return out[0] if out.shape[0] == 1 else out


def shifted_sum_contraction(P: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Second-moment contractions of the Toeplitz matrix of a random vector.

    For a random vector x with mean m and covariance P, returns

    * ``S`` with ``S[i, j] = sum_t P[t - i, t - j]`` over the valid
      diagonal band (t from max(i, j) to n-1, 0-based), which equals
      ``E{T(x - m)^T T(x - m)}``;
    * ``T = S + T(m)^T T(m)``, which equals ``E{T(x)^T T(x)}``.

    S is assembled in O(n^2) as suffix sums along the diagonals of P
    flipped in both axes.
    """
    P = np.asarray(P, dtype=float)
    m = np.asarray(m, dtype=float).ravel()
    n = P.shape[0]
    if P.ndim != 2 or P.shape[1] != n:
        raise ValueError("P must be square")
    if len(m) != n:
        raise ValueError("mean length must match P")
    scale = max(1.0, float(np.max(np.abs(P))))
    if np.max(np.abs(P - P.T)) > 1e-10 * scale:
        raise ValueError("P must be symmetric")

    flipped = P[::-1, ::-1]
    S = np.zeros_like(P)
    for d in range(n):
        suffix = np.cumsum(np.diagonal(flipped, d)[::-1])[::-1]
        idx = np.arange(n - d)
        S[idx, idx + d] = suffix
        if d:
            S[idx + d, idx] = suffix
    M = toeplitz(m, n, n)
    T = S + M.T @ M
    return S, T
