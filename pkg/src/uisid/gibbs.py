"""Gibbs sampling of the joint posterior over (g, w) and sample moments.

One sweep draws g from its conditional given the current w, then w from
its conditional given the fresh g.  The first ``burn_in`` pairs are
discarded; the ``retained`` pairs that follow feed the Monte-Carlo EM
moments.  Sampling works on the precision form directly: with the
precision factored as L L^T, the mean is a double triangular solve and a
draw is mean + L^{-T} z, so no covariance matrix is ever formed inside
the chain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .conditionals import GaussianBelief, g_precision_rhs, w_precision_rhs
from .linalg import chol_psd, CholeskyError, single_threaded_blas, symmetrize
from .model import UIModel
from .toeplitz import convolve_truncated


@dataclass
class ChainConfig:
    """Burn-in length, retained sample count, seed, optional overrides."""

    burn_in: int = 400
    retained: int = 2000
    seed: int = 0
    init_g: Optional[np.ndarray] = None
    init_w: Optional[np.ndarray] = None
    trace_path: Optional[str] = None

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn-in must be nonnegative")
        if self.retained < 1:
            raise ValueError("need at least one retained sample")


@dataclass
class MomentSet:
    """Per-iteration sufficient statistics extracted from posterior samples."""

    g_hat: np.ndarray
    w_hat: np.ndarray
    P_g: np.ndarray
    P_w: np.ndarray
    R_y: float
    R_v: Optional[float] = None
    S_g: Optional[np.ndarray] = None
    T_g: Optional[np.ndarray] = None


def draw_gaussian(belief: GaussianBelief, rng: np.random.Generator) -> np.ndarray:
    """One draw from a Gaussian belief: mean + L z with L the lower factor.

    An identically zero covariance returns the mean exactly.
    """
    if not np.any(belief.cov):
        return belief.mean.copy()
    L, _ = chol_psd(belief.cov, name="draw covariance")
    return belief.mean + L @ rng.standard_normal(belief.dim)


def _sample_from_precision(A, rhs, rng, what, iteration):
    """Draw from N(A^{-1} rhs, A^{-1}) via one factorization of A."""
    try:
        L, _ = chol_psd(A, name=what)
    except CholeskyError as exc:
        raise CholeskyError(f"sweep {iteration}: {exc}") from exc
    half = sla.solve_triangular(L, rhs, lower=True, check_finite=False)
    mean = sla.solve_triangular(L.T, half, lower=False, check_finite=False)
    noise = sla.solve_triangular(L.T, rng.standard_normal(len(rhs)), lower=False, check_finite=False)
    return mean, mean + noise


def default_init(model: UIModel, tau) -> tuple[np.ndarray, np.ndarray]:
    """Chain starting point: observed v where available (prior mean of the
    input elsewhere), and the prior mean of g if nonzero, else the
    known-input posterior mean given the starting input."""
    n = model.n
    mu_w, _ = model.prior_w.evaluate(n, tau.theta)
    mask = tau.noise(model).mask(n)
    w0 = mu_w.copy()
    if mask.any():
        w0[mask] = model.v[mask]
    mu_g, K_g = model.prior_g.evaluate(n, tau.rho)
    if np.any(mu_g):
        g0 = mu_g.copy()
    else:
        from .conditionals import cond_g_given_w

        g0 = cond_g_given_w(w0, model.y, (mu_g, K_g), tau.sigma_y2).mean
    return g0, w0


def run_chain(model: UIModel, tau, cfg: ChainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Run the two-block Gibbs sampler and return retained samples.

    Returns (g_samples, w_samples), each of shape (retained, n), in draw
    order.  Identical (model, tau, cfg) produce bit-identical output.
    """
    n = model.n
    mu_g, K_g = model.prior_g.evaluate(n, tau.rho)
    mu_w, K_w = model.prior_w.evaluate(n, tau.theta)
    if model.prior_g.degenerate or model.prior_w.degenerate:
        raise ValueError("Gibbs sampling needs non-degenerate priors on both unknowns")
    noise = tau.noise(model)

    Lg, _ = chol_psd(K_g, name="K_g")
    Kg_inv = _inverse_from_factor(Lg)
    Kg_inv_mu = Kg_inv @ mu_g
    Lw, _ = chol_psd(K_w, name="K_w")
    Kw_inv = _inverse_from_factor(Lw)
    Kw_inv_mu = Kw_inv @ mu_w

    if cfg.init_g is not None or cfg.init_w is not None:
        if cfg.init_g is None or cfg.init_w is None:
            raise ValueError("override either both chain initializers or neither")
        g = np.asarray(cfg.init_g, dtype=float).ravel().copy()
        w = np.asarray(cfg.init_w, dtype=float).ravel().copy()
    else:
        g, w = default_init(model, tau)

    rng = np.random.default_rng(cfg.seed)
    total = cfg.burn_in + cfg.retained
    g_samples = np.empty((cfg.retained, n))
    w_samples = np.empty((cfg.retained, n))
    writer = _TraceWriter(cfg.trace_path, n) if cfg.trace_path else None
    try:
        with single_threaded_blas():
            for j in range(total):
                A, rhs = g_precision_rhs(w, model.y, Kg_inv, Kg_inv_mu, noise.sigma_y2)
                _, g = _sample_from_precision(A, rhs, rng, "g conditional precision", j)
                A, rhs = w_precision_rhs(g, model.y, model.v, noise, Kw_inv, Kw_inv_mu)
                _, w = _sample_from_precision(A, rhs, rng, "w conditional precision", j)
                if j >= cfg.burn_in:
                    g_samples[j - cfg.burn_in] = g
                    w_samples[j - cfg.burn_in] = w
                if writer:
                    writer.write(j, g, w)
    finally:
        if writer:
            writer.close()
    return g_samples, w_samples


def sample_moments(samples, y, v=None, noise=None) -> MomentSet:
    """Averages and centered second moments of retained samples.

    ``samples`` is the (g_samples, w_samples) pair from :func:`run_chain`.
    Covariances use 1/M normalization.  R_y averages the squared output
    residual per particle; R_v does the same over the observed input
    samples and is None when there are none.
    """
    g_samples, w_samples = samples
    g_samples = np.atleast_2d(np.asarray(g_samples, dtype=float))
    w_samples = np.atleast_2d(np.asarray(w_samples, dtype=float))
    m = g_samples.shape[0]
    if m < 1 or w_samples.shape[0] != m:
        raise ValueError("need matched, nonempty sample arrays")
    y = np.asarray(y, dtype=float).ravel()

    g_hat = g_samples.mean(axis=0)
    w_hat = w_samples.mean(axis=0)
    dg = g_samples - g_hat
    dw = w_samples - w_hat
    P_g = symmetrize(dg.T @ dg / m)
    P_w = symmetrize(dw.T @ dw / m)

    resid = y - convolve_truncated(w_samples, g_samples)
    resid = np.atleast_2d(resid)
    R_y = float(np.mean(np.sum(resid * resid, axis=1)))

    R_v = None
    n = len(y)
    mask = noise.mask(n) if noise is not None else (np.ones(n, dtype=bool) if v is not None else np.zeros(n, dtype=bool))
    if mask.any():
        dv = np.asarray(v, dtype=float).ravel()[mask] - w_samples[:, mask]
        R_v = float(np.mean(np.sum(dv * dv, axis=1)))
    return MomentSet(g_hat, w_hat, P_g, P_w, R_y, R_v)


def _inverse_from_factor(L):
    return symmetrize(sla.cho_solve((L, True), np.eye(L.shape[0]), check_finite=False))


class _TraceWriter:
    """CSV dump of every sweep, for debugging chain behavior."""

    def __init__(self, path, n):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(["iteration"] + [f"g{i}" for i in range(n)] + [f"w{i}" for i in range(n)])

    def write(self, j, g, w):
        self._writer.writerow([j] + [repr(x) for x in g] + [repr(x) for x in w])

    def close(self):
        self._fh.close()
