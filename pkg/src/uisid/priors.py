"""Gaussian-process prior constructors: mean functions and kernels.

Covers the configurations the estimation stack instantiates:

* first-order stable-spline kernel ``c * lam**max(i, j)`` for impulse
  responses (exponentially decaying, smooth),
* Gaussian RBF kernel evaluated at the entries of a known input signal,
  for static nonlinearities,
* the "cascade" wrap ``U K U^T`` that pushes a kernel on an upstream
  impulse response through a known-input convolution,
* the degenerate (zero) kernel that turns a Gaussian prior into a point
  mass at its mean, plus zero / fixed-signal / basis-expansion means.

Hyperparameters are optimized elsewhere in unconstrained coordinates;
each kernel kind declares a log/logit transform of its domain here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .toeplitz import toeplitz
from .linalg import symmetrize

STABLE_SPLINE = "stable_spline"
RBF = "rbf"
CASCADE = "cascade"
DEGENERATE = "degenerate"

ZERO = "zero"
FIXED_SIGNAL = "fixed"
BASIS = "basis"


def stable_spline_matrix(c: float, lam: float, n: int) -> np.ndarray:
    """First-order stable-spline kernel matrix K[i, j] = c * lam**max(i, j).

    ``c >= 0`` sets the scale and ``lam`` in (0, 1) the decay rate of the
    responses the prior favors (1-based indices, so the diagonal starts
    at c * lam).
    """
    if c < 0:
        raise ValueError(f"scale must be nonnegative, got {c}")
    if not 0.0 < lam < 1.0:
        raise ValueError(f"decay rate must lie in (0, 1), got {lam}")
    idx = np.arange(1, n + 1)
    return c * lam ** np.maximum.outer(idx, idx)


def rbf_matrix(theta1: float, theta2: float, u: np.ndarray) -> np.ndarray:
    """Gaussian RBF kernel on the sample values of a signal.

    K[i, j] = theta1 * exp(-(u_i - u_j)^2 / theta2).
    """
    return rbf_cross(theta1, theta2, u, u)


def rbf_cross(theta1: float, theta2: float, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """RBF cross-covariance between two abscissa sets (used for grid read-out)."""
    if theta1 < 0:
        raise ValueError(f"amplitude must be nonnegative, got {theta1}")
    if theta2 <= 0:
        raise ValueError(f"squared length scale must be positive, got {theta2}")
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    d = x1[:, None] - x2[None, :]
    return theta1 * np.exp(-(d * d) / theta2)


def cascade_kernel(K1: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Covariance of T(u) x when x has covariance K1: U K1 U^T."""
    K1 = np.asarray(K1, dtype=float)
    u = np.asarray(u, dtype=float).ravel()
    n = len(u)
    if K1.shape != (n, n):
        raise ValueError(f"kernel is {K1.shape}, input has length {n}")
    U = toeplitz(u, n, n)
    return symmetrize(U @ K1 @ U.T)


def legendre_basis(u: np.ndarray, p: int) -> np.ndarray:
    """Legendre polynomial design matrix on [-1, 1].

    Column j (0-based) holds the degree-j polynomial evaluated at u, for
    degrees 0 .. p-1, computed with the standard three-term recurrence.
    Entries of u outside [-1, 1] are rejected: these polynomials are the
    orthogonal family on that interval and the estimators feed them
    inputs bounded accordingly.
    """
    if p < 1:
        raise ValueError("basis needs at least one column")
    u = np.asarray(u, dtype=float).ravel()
    if np.any(np.abs(u) > 1.0 + 1e-12):
        raise ValueError("abscissae must lie in [-1, 1]")
    return np.polynomial.legendre.legvander(np.clip(u, -1.0, 1.0), p - 1)


# Unconstrained coordinates for the inner optimizer: positives go through
# log, (0, 1) rates through logit, anything else is left alone.
_LOG, _LOGIT, _IDENT = "log", "logit", "identity"

_KERNEL_TRANSFORMS = {
    STABLE_SPLINE: (_LOG, _LOGIT),
    RBF: (_LOG, _LOG),
    CASCADE: (_LOG, _LOGIT),
    DEGENERATE: (),
}


def _fwd(kind, x):
    if kind == _LOG:
        return np.log(x)
    if kind == _LOGIT:
        return np.log(x) - np.log1p(-x)
    return x


def _inv(kind, z):
    if kind == _LOG:
        return np.exp(z)
    if kind == _LOGIT:
        return 1.0 / (1.0 + np.exp(-z))
    return z


def transform_params(domain, x) -> np.ndarray:
    """Map constrained parameters to unconstrained optimizer coordinates."""
    return np.array([_fwd(k, v) for k, v in zip(domain, np.ravel(x))], dtype=float)


def untransform_params(domain, z) -> np.ndarray:
    """Inverse of :func:`transform_params`."""
    return np.array([_inv(k, v) for k, v in zip(domain, np.ravel(z))], dtype=float)


@dataclass(frozen=True)
class KernelSpec:
    """One covariance family plus its current hyperparameter values.

    Parameters
    ----------
    kind : str
        One of ``stable_spline``, ``rbf``, ``cascade``, ``degenerate``.
    hyper : tuple of float
        (c, lam) for stable-spline and cascade, (theta1, theta2) for RBF,
        empty for degenerate.
    context : ndarray, optional
        Known input signal; required by the RBF and cascade kinds.
    fixed : tuple of int
        Indices of ``hyper`` that stay pinned during hyperparameter
        fitting (e.g. the RBF amplitude when the model is otherwise not
        identifiable in scale).
    """

    kind: str
    hyper: tuple = ()
    context: Optional[np.ndarray] = None
    fixed: tuple = ()

    def __post_init__(self):
        if self.kind not in _KERNEL_TRANSFORMS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind in (RBF, CASCADE) and self.context is None:
            raise ValueError(f"{self.kind} kernel needs a context signal")
        expected = len(_KERNEL_TRANSFORMS[self.kind])
        if len(self.hyper) != expected:
            raise ValueError(f"{self.kind} kernel takes {expected} hyperparameters")

    @property
    def n_hyper(self) -> int:
        return len(self.hyper)

    @property
    def degenerate(self) -> bool:
        return self.kind == DEGENERATE

    def matrix(self, n: int, hyper=None) -> np.ndarray:
        """Evaluate the n x n covariance matrix at the given (or stored) hypers."""
        h = self.hyper if hyper is None else tuple(np.asarray(hyper, dtype=float))
        if self.kind == DEGENERATE:
            return np.zeros((n, n))
        if self.kind == STABLE_SPLINE:
            return stable_spline_matrix(h[0], h[1], n)
        if self.kind == RBF:
            u = self._context(n)
            return rbf_matrix(h[0], h[1], u)
        u = self._context(n)
        return cascade_kernel(stable_spline_matrix(h[0], h[1], n), u)

    def _context(self, n: int) -> np.ndarray:
        u = np.asarray(self.context, dtype=float).ravel()
        if len(u) != n:
            raise ValueError(f"context length {len(u)} does not match n={n}")
        return u


@dataclass(frozen=True)
class MeanSpec:
    """Mean function: identically zero, a known signal, or Phi @ coeff."""

    kind: str = ZERO
    signal: Optional[np.ndarray] = None
    basis: Optional[np.ndarray] = None
    coeff: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in (ZERO, FIXED_SIGNAL, BASIS):
            raise ValueError(f"unknown mean kind {self.kind!r}")
        if self.kind == FIXED_SIGNAL and self.signal is None:
            raise ValueError("fixed mean needs a signal")
        if self.kind == BASIS:
            if self.basis is None or self.coeff is None:
                raise ValueError("basis mean needs basis and coeff")
            if np.shape(self.basis)[1] != len(np.ravel(self.coeff)):
                raise ValueError("basis column count must match coeff length")

    @property
    def n_coeff(self) -> int:
        return 0 if self.kind != BASIS else np.shape(self.basis)[1]

    def vector(self, n: int, coeff=None) -> np.ndarray:
        if self.kind == ZERO:
            return np.zeros(n)
        if self.kind == FIXED_SIGNAL:
            s = np.asarray(self.signal, dtype=float).ravel()
            if len(s) != n:
                raise ValueError(f"fixed mean length {len(s)} does not match n={n}")
            return s.copy()
        phi = np.asarray(self.basis, dtype=float)
        if phi.shape[0] != n:
            raise ValueError(f"basis has {phi.shape[0]} rows, expected {n}")
        c = np.asarray(self.coeff if coeff is None else coeff, dtype=float).ravel()
        if len(c) != phi.shape[1]:
            raise ValueError("coefficient length does not match basis")
        return phi @ c


@dataclass(frozen=True)
class PriorSpec:
    """Mean plus kernel for one unknown signal.

    The free parameter vector of the prior is routed by structure: it
    feeds the basis-expansion coefficients when the kernel is degenerate
    (the unknown is then a deterministic parametric signal), and the
    kernel hyperparameters otherwise.
    """

    mean: MeanSpec = field(default_factory=MeanSpec)
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec(DEGENERATE))

    @property
    def degenerate(self) -> bool:
        return self.kernel.degenerate

    @property
    def n_params(self) -> int:
        return self.mean.n_coeff if self.degenerate else self.kernel.n_hyper

    def params(self) -> np.ndarray:
        """Current parameter values stored on the spec."""
        if self.degenerate:
            if self.mean.kind == BASIS:
                return np.asarray(self.mean.coeff, dtype=float).ravel().copy()
            return np.zeros(0)
        return np.asarray(self.kernel.hyper, dtype=float)

    def evaluate(self, n: int, params=None) -> tuple[np.ndarray, np.ndarray]:
        """Mean vector and covariance matrix at the given parameter values."""
        if params is not None and len(np.ravel(params)) != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters")
        if self.degenerate:
            mu = self.mean.vector(n, coeff=params if self.mean.kind == BASIS else None)
            return mu, self.kernel.matrix(n)
        return self.mean.vector(n), self.kernel.matrix(n, hyper=params)

    def free_indices(self) -> np.ndarray:
        if self.degenerate:
            return np.arange(self.n_params)
        return np.array([i for i in range(self.n_params) if i not in self.kernel.fixed], dtype=int)

    def domain(self) -> tuple:
        """Per-parameter transform kinds for the inner optimizer."""
        if self.degenerate:
            return (_IDENT,) * self.n_params
        return _KERNEL_TRANSFORMS[self.kernel.kind]


def evaluate_prior(spec: PriorSpec, n: int, params=None) -> tuple[np.ndarray, np.ndarray]:
    """Finite-dimensional marginal (mean, covariance) of a prior spec.

    The degenerate kernel returns an exact zero matrix; callers branch on
    that to treat the unknown as the deterministic signal mu.
    """
    return spec.evaluate(n, params=params)
