"""Independent reference implementations used only by the tests.

Everything here is deliberately naive: explicit selector matrices,
Kronecker products, full joint-Gaussian block conditioning, direct
density evaluation.  Production code must never import this module.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def selector_matrix(n: int) -> np.ndarray:
    """The n x n^2 block-row of shift selectors with T(x)^T = R (I kron x).

    Block k (0-based) has ones on the anti-diagonal positions
    (i, j) with i + j = k, matching a 1-based definition i + j - 1 = k + 1.
    """
    R = np.zeros((n, n * n))
    for k in range(n):
        block = np.zeros((n, n))
        for i in range(n):
            j = k - i
            if 0 <= j < n:
                block[i, j] = 1.0
        R[:, k * n : (k + 1) * n] = block
    return R


def contraction_via_kronecker(P: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Literal R (I kron .) R^T evaluation of the second-moment contraction."""
    n = P.shape[0]
    R = selector_matrix(n)
    S = R @ np.kron(np.eye(n), P) @ R.T
    second = P + np.outer(m, m)
    T = R @ np.kron(np.eye(n), second) @ R.T
    return S, T


def toeplitz_naive(v, n_rows, n_cols) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    out = np.zeros((n_rows, n_cols))
    for i in range(n_rows):
        for j in range(n_cols):
            k = i - j
            if 0 <= k < len(v):
                out[i, j] = v[k]
    return out


def condition_gaussian(mu, cov, obs_idx, obs_values):
    """Block conditioning of a joint Gaussian on a subset of coordinates.

    Returns the (mean, covariance) of the remaining coordinates given the
    observed ones.
    """
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    all_idx = np.arange(len(mu))
    hid_idx = np.array([i for i in all_idx if i not in set(obs_idx)])
    obs_idx = np.asarray(obs_idx, dtype=int)
    S_hh = cov[np.ix_(hid_idx, hid_idx)]
    S_ho = cov[np.ix_(hid_idx, obs_idx)]
    S_oo = cov[np.ix_(obs_idx, obs_idx)]
    gain = S_ho @ np.linalg.inv(S_oo)
    mean = mu[hid_idx] + gain @ (np.asarray(obs_values) - mu[obs_idx])
    return mean, S_hh - gain @ S_ho.T


def cond_g_oracle(w, y, mu_g, K_g, sigma_y2):
    """p(g | y) for y = T(w) g + noise via explicit joint conditioning."""
    n = len(y)
    W = toeplitz_naive(w, n, n)
    mu = np.concatenate([mu_g, W @ mu_g])
    cov = np.block([[K_g, K_g @ W.T], [W @ K_g, W @ K_g @ W.T + sigma_y2 * np.eye(n)]])
    return condition_gaussian(mu, cov, np.arange(n, 2 * n), y)


def cond_w_oracle(g, y, v, mu_w, K_w, sigma_y2, sigma_v2, mask=None):
    """p(w | y, v_observed) via explicit joint conditioning."""
    n = len(y)
    G = toeplitz_naive(g, n, n)
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    sel = np.eye(n)[mask]
    k = int(mask.sum())
    mu = np.concatenate([mu_w, G @ mu_w, sel @ mu_w])
    cov = np.block(
        [
            [K_w, K_w @ G.T, K_w @ sel.T],
            [G @ K_w, G @ K_w @ G.T + sigma_y2 * np.eye(n), G @ K_w @ sel.T],
            [sel @ K_w, sel @ K_w @ G.T, sel @ K_w @ sel.T + sigma_v2 * np.eye(k)],
        ]
    )
    obs = np.concatenate([y, np.asarray(v)[mask]])
    return condition_gaussian(mu, cov, np.arange(n, 2 * n + k), obs)


def mvn_logpdf(x, mu, cov) -> float:
    d = np.asarray(x, dtype=float) - np.asarray(mu, dtype=float)
    k = len(d)
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return float(-0.5 * d @ np.linalg.solve(cov, d) - 0.5 * logdet - 0.5 * k * LOG_2PI)


def legendre_recurrence(x, degree: int) -> np.ndarray:
    """Three-term recurrence evaluation of one Legendre polynomial."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if degree == 0:
        return p_prev
    p = x.copy()
    for j in range(1, degree):
        p, p_prev = ((2 * j + 1) * x * p - j * p_prev) / (j + 1), p
    return p


def impulse_response_residue(poles, zeros, gain, n) -> np.ndarray:
    """Impulse response via partial-fraction decomposition (scipy residuez)."""
    import scipy.signal

    num = gain * (np.poly(zeros) if len(zeros) else np.array([1.0]))
    den = np.poly(poles) if len(poles) else np.array([1.0])
    r, p, k = scipy.signal.residuez(np.real_if_close(num, tol=1e6), np.real_if_close(den, tol=1e6))
    t = np.arange(n)
    h = np.zeros(n, dtype=complex)
    for ri, pi in zip(r, p):
        h += ri * pi**t
    h = h.real
    for i, ki in enumerate(np.atleast_1d(k)):
        if i < n:
            h[i] += np.real(ki)
    return h
