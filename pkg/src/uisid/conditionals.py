"""Closed-form Gaussian conditionals shared by every inference backend.

The observation model is ``y = T(w) g + eps`` with optional input
measurements ``v = w + eta``.  Conditioned on one of the two unknown
signals the other is Gaussian, and both conditionals are assembled here
in precision form:

* g given (w, y):      precision  T(w)^T T(w) / sy2 + K_g^{-1}
* w given (g, y, v):   precision  T(g)^T T(g) / sy2 + diag(prec_v) + K_w^{-1}

Missing input measurements are handled by a per-sample precision vector
that is exactly zero for masked samples (an infinite noise variance
masks everything).  The same assembly routines feed the Gibbs sampler,
which factors the precision once per draw instead of inverting it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import chol_psd, chol_solve, chol_inverse, chol_logdet, symmetrize
from .toeplitz import toeplitz, convolve_truncated

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GaussianBelief:
    """Mean vector and symmetric PSD covariance of one Gaussian factor."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.cov = np.asarray(self.cov, dtype=float)
        n = len(self.mean)
        if self.cov.shape != (n, n):
            raise ValueError(f"covariance shape {self.cov.shape} does not match mean length {n}")
        scale = max(1.0, float(np.max(np.abs(self.cov))))
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-12 * scale:
            raise ValueError("covariance must be symmetric")

    @property
    def dim(self) -> int:
        return len(self.mean)


@dataclass
class NoiseModel:
    """Output and input measurement-noise variances.

    ``sigma_v2 = inf`` means no input measurements contribute; a boolean
    ``v_mask`` marks per-sample availability (True = observed) for the
    in-between cases.
    """

    sigma_y2: float
    sigma_v2: float = np.inf
    v_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.sigma_y2 <= 0:
            raise ValueError("output noise variance must be positive")
        if self.sigma_v2 <= 0:
            raise ValueError("input noise variance must be positive (use inf for no measurements)")
        if self.v_mask is not None:
            self.v_mask = np.asarray(self.v_mask, dtype=bool).ravel()

    def mask(self, n: int) -> np.ndarray:
        """Boolean availability of the n input samples."""
        if not np.isfinite(self.sigma_v2):
            return np.zeros(n, dtype=bool)
        if self.v_mask is None:
            return np.ones(n, dtype=bool)
        if len(self.v_mask) != n:
            raise ValueError("mask length does not match signal length")
        return self.v_mask

    def n_v_observed(self, n: int) -> int:
        return int(self.mask(n).sum())

    def has_v(self, n: int) -> bool:
        return self.n_v_observed(n) > 0


def _belief_from_precision(A: np.ndarray, rhs: np.ndarray, name: str) -> GaussianBelief:
    L, _ = chol_psd(A, name=name)
    mean = chol_solve(L, rhs)
    return GaussianBelief(mean, chol_inverse(L))


def g_precision_rhs(w, y, Kg_inv, Kg_inv_mu, sigma_y2):
    """Precision matrix and right-hand side of the g conditional."""
    n = len(y)
    W = toeplitz(w, n, n)
    A = W.T @ W / sigma_y2 + Kg_inv
    rhs = W.T @ y / sigma_y2 + Kg_inv_mu
    return A, rhs


def w_precision_rhs(g, y, v, noise: NoiseModel, Kw_inv, Kw_inv_mu):
    """Precision matrix and right-hand side of the w conditional.

    Input-measurement terms are added only where the per-sample precision
    is nonzero, so the infinite-variance case is bit-for-bit identical to
    deleting the terms.
    """
    n = len(y)
    G = toeplitz(g, n, n)
    A = G.T @ G / noise.sigma_y2 + Kw_inv
    rhs = G.T @ y / noise.sigma_y2 + Kw_inv_mu
    mask = noise.mask(n)
    if mask.any():
        if v is None:
            raise ValueError("finite input-noise variance but no input measurements given")
        prec = np.where(mask, 1.0 / noise.sigma_v2, 0.0)
        A = A + np.diag(prec)
        rhs = rhs + np.where(mask, np.asarray(v, dtype=float), 0.0) * prec
    return A, rhs


def cond_g_given_w(w, y, prior_g, sigma_y2) -> GaussianBelief:
    """Posterior of the impulse response given the input signal and y.

    ``prior_g`` is a (mean, covariance) pair; the covariance must be
    invertible after jitter.
    """
    mu_g, K_g = prior_g
    y = np.asarray(y, dtype=float).ravel()
    L, _ = chol_psd(K_g, name="K_g")
    Kg_inv = chol_inverse(L)
    A, rhs = g_precision_rhs(np.asarray(w, dtype=float).ravel(), y, Kg_inv, Kg_inv @ mu_g, sigma_y2)
    return _belief_from_precision(A, rhs, "g posterior precision")


def cond_w_given_g(g, y, v, prior_w, noise: NoiseModel) -> GaussianBelief:
    """Posterior of the input signal given the impulse response, y and v."""
    mu_w, K_w = prior_w
    y = np.asarray(y, dtype=float).ravel()
    L, _ = chol_psd(K_w, name="K_w")
    Kw_inv = chol_inverse(L)
    A, rhs = w_precision_rhs(np.asarray(g, dtype=float).ravel(), y, v, noise, Kw_inv, Kw_inv @ mu_w)
    return _belief_from_precision(A, rhs, "w posterior precision")


def semiparam_posterior_g(mu_w, y, prior_g, sigma_y2) -> GaussianBelief:
    """Posterior of g when the input prior is a point mass at mu_w.

    With a degenerate input covariance the input posterior is the point
    mass at its mean, and the g posterior is the known-input conditional
    evaluated at that mean.
    """
    return cond_g_given_w(mu_w, y, prior_g, sigma_y2)


def parametric_nll(mu_g, mu_w, y, v, noise: NoiseModel) -> float:
    """Negative log-likelihood when both priors are point masses.

    Additive constants are dropped; with no input measurements the input
    block vanishes entirely.
    """
    mu_g = np.asarray(mu_g, dtype=float).ravel()
    mu_w = np.asarray(mu_w, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    resid_y = y - convolve_truncated(mu_w, mu_g)
    total = float(resid_y @ resid_y) / (2.0 * noise.sigma_y2) + 0.5 * n * np.log(noise.sigma_y2)
    mask = noise.mask(n)
    if mask.any():
        resid_v = (np.asarray(v, dtype=float).ravel() - mu_w)[mask]
        total += float(resid_v @ resid_v) / (2.0 * noise.sigma_v2)
        total += 0.5 * mask.sum() * np.log(noise.sigma_v2)
    return total


def _gauss_iid_logpdf(resid: np.ndarray, var: float) -> np.ndarray:
    """Log density of iid zero-mean Gaussians, summed over the last axis."""
    k = resid.shape[-1]
    return -0.5 * np.sum(resid * resid, axis=-1) / var - 0.5 * k * (LOG_2PI + np.log(var))


def _gauss_mvn_logpdf(x: np.ndarray, mu: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Multivariate normal log density given a Cholesky factor; x may be batched."""
    import scipy.linalg as sla

    d = np.atleast_2d(x) - mu
    z = sla.solve_triangular(L, d.T, lower=True, check_finite=False)
    quad = np.sum(z * z, axis=0)
    k = len(mu)
    out = -0.5 * quad - 0.5 * k * LOG_2PI - 0.5 * chol_logdet(L)
    return out if np.ndim(x) > 1 else float(out[0])


def log_joint(y, v, g, w, prior_g, prior_w, noise: NoiseModel):
    """Complete-data log density log p(y, v, g, w) with all constants.

    Requires both prior covariances to be invertible.  ``g`` and ``w``
    may be batched as (draws, n); the result is then a vector.  Masked
    input samples contribute nothing.
    """
    mu_g, K_g = prior_g
    mu_w, K_w = prior_w
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    g2 = np.atleast_2d(np.asarray(g, dtype=float))
    w2 = np.atleast_2d(np.asarray(w, dtype=float))
    Lg, _ = chol_psd(K_g, name="K_g")
    Lw, _ = chol_psd(K_w, name="K_w")
    out = _gauss_iid_logpdf(y - convolve_truncated(w2, g2), noise.sigma_y2)
    mask = noise.mask(n)
    if mask.any():
        resid_v = (np.asarray(v, dtype=float).ravel() - w2)[:, mask]
        out = out + _gauss_iid_logpdf(resid_v, noise.sigma_v2)
    out = out + _gauss_mvn_logpdf(g2, np.asarray(mu_g, dtype=float).ravel(), Lg)
    out = out + _gauss_mvn_logpdf(w2, np.asarray(mu_w, dtype=float).ravel(), Lw)
    return out if np.ndim(g) > 1 else float(out[0])


def log_complete_semiparam(y, v, g, mu_w, prior_g, noise: NoiseModel):
    """Complete-data log density when the input prior is a point mass.

    The input integrates out against the point mass, leaving the output
    block at w = mu_w, the input-measurement block at mu_w, and the g
    prior.  Constants kept; g may be batched.
    """
    mu_g, K_g = prior_g
    y = np.asarray(y, dtype=float).ravel()
    mu_w = np.asarray(mu_w, dtype=float).ravel()
    n = len(y)
    g2 = np.atleast_2d(np.asarray(g, dtype=float))
    Lg, _ = chol_psd(K_g, name="K_g")
    out = _gauss_iid_logpdf(y - convolve_truncated(np.broadcast_to(mu_w, g2.shape), g2), noise.sigma_y2)
    mask = noise.mask(n)
    if mask.any():
        resid_v = (np.asarray(v, dtype=float).ravel() - mu_w)[mask]
        out = out + _gauss_iid_logpdf(resid_v, noise.sigma_v2)
    out = out + _gauss_mvn_logpdf(g2, np.asarray(mu_g, dtype=float).ravel(), Lg)
    return out if np.ndim(g) > 1 else float(out[0])
