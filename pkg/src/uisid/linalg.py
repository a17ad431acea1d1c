"""Dense linear-algebra helpers shared across the package.

Everything here operates on plain float64 numpy arrays.  The central
utility is :func:`chol_psd`, a Cholesky factorization with escalating
diagonal jitter: kernel matrices built from smooth inputs are routinely
semidefinite to machine precision, so the bare factorization is tried
first and jitter is added only on failure.
"""

from __future__ import annotations

import contextlib

import numpy as np
import scipy.linalg as sla

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

# Jitter is scaled by trace(A)/n; escalation multiplies by 10 per retry.
JITTER_START = 1e-10
JITTER_LIMIT = 1e-4


def single_threaded_blas():
    """Context manager pinning BLAS to one thread.

    Threaded BLAS loses badly on the 200x200 factorizations that dominate
    the samplers here (lock contention can cost two orders of magnitude),
    so the iterative drivers wrap themselves in this.
    """
    if threadpool_limits is None:  # pragma: no cover
        return contextlib.nullcontext()
    return threadpool_limits(limits=1, user_api="blas")


class CholeskyError(np.linalg.LinAlgError):
    """Raised when a matrix stays indefinite after maximum jitter."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part (a + a.T) / 2."""
    return 0.5 * (a + a.T)


def chol_psd(a: np.ndarray, name: str = "matrix") -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of a symmetric PSD matrix.

    Tries the plain factorization; on failure adds ``eps * trace(a)/n`` to
    the diagonal with ``eps`` escalating from 1e-10 to 1e-4 in decades.

    Returns
    -------
    (L, jitter) : lower-triangular factor and the jitter actually added.

    Raises
    ------
    CholeskyError
        If the factorization still fails at the jitter ceiling, or if the
        matrix has nonpositive trace (no scale to anchor jitter on).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    try:
        return sla.cholesky(a, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = np.trace(a) / n
    if not np.isfinite(scale) or scale <= 0.0:
        raise CholeskyError(f"{name}: not positive definite and trace gives no jitter scale")
    eps = JITTER_START
    eye = np.eye(n)
    while eps <= JITTER_LIMIT:
        try:
            jitter = eps * scale
            return sla.cholesky(a + jitter * eye, lower=True, check_finite=False), jitter
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise CholeskyError(f"{name}: Cholesky failed after jitter escalation to {JITTER_LIMIT:g}*trace/n")


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b given the lower Cholesky factor L of A."""
    return sla.cho_solve((L, True), b, check_finite=False)


def chol_logdet(L: np.ndarray) -> float:
    """log det A from its lower Cholesky factor."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def chol_inverse(L: np.ndarray) -> np.ndarray:
    """A^{-1} from the lower Cholesky factor of A, symmetrized."""
    inv = sla.cho_solve((L, True), np.eye(L.shape[0]), check_finite=False)
    return symmetrize(inv)


def quad_form_inv(L: np.ndarray, x: np.ndarray) -> float:
    """x^T A^{-1} x given the lower Cholesky factor L of A."""
    z = sla.solve_triangular(L, x, lower=True, check_finite=False)
    return float(z @ z)


def trace_solve(L: np.ndarray, b: np.ndarray) -> float:
    """trace(A^{-1} B) given the lower Cholesky factor L of A."""
    z = sla.solve_triangular(L, b, lower=True, check_finite=False)
    z = sla.solve_triangular(L, z.T, lower=True, check_finite=False)
    return float(np.trace(z))


def min_eigval(a: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(symmetrize(a))[0])
