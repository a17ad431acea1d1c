"""Mean-field variational approximation of the joint (g, w) posterior.

The approximating family factorizes as q(g, w) = q_g(g) q_w(w) with both
factors Gaussian.  One step updates the input factor from the current
impulse-response moments, then the impulse-response factor from the
fresh input moments:

    T_g  = contraction of (P_g + g g^T)              (second moment of T(g))
    P_w' = (T_g / sy2 + diag(prec_v) + K_w^{-1})^{-1}
    w'   = P_w' (T(g)^T y / sy2 + v * prec_v + K_w^{-1} mu_w)
    T_w  = contraction of (P_w' + w' w'^T)
    P_g' = (T_w / sy2 + K_g^{-1})^{-1}
    g'   = P_g' (T(w')^T y / sy2 + K_g^{-1} mu_g)

Iterating converges to the factorization closest to the joint posterior
in KL distance; the update order above is fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditionals import GaussianBelief
from .linalg import chol_psd, chol_solve, chol_inverse, single_threaded_blas
from .model import UIModel, Hyperparameters
from .toeplitz import toeplitz, shifted_sum_contraction
from .gibbs import default_init


@dataclass
class VBState:
    """The two Gaussian factors plus iteration bookkeeping."""

    q_g: GaussianBelief
    q_w: GaussianBelief
    iteration: int = 0
    converged: bool = False


class _VBWork:
    """Prior inverses and data terms precomputed once per (model, tau)."""

    def __init__(self, model: UIModel, tau: Hyperparameters):
        n = model.n
        self.model = model
        self.tau = tau
        self.mu_g, K_g = model.prior_g.evaluate(n, tau.rho)
        self.mu_w, K_w = model.prior_w.evaluate(n, tau.theta)
        if model.prior_g.degenerate or model.prior_w.degenerate:
            raise ValueError("variational factors need non-degenerate priors")
        Lg, _ = chol_psd(K_g, name="K_g")
        Lw, _ = chol_psd(K_w, name="K_w")
        self.Kg_inv = chol_inverse(Lg)
        self.Kw_inv = chol_inverse(Lw)
        self.Kg_inv_mu = self.Kg_inv @ self.mu_g
        self.Kw_inv_mu = self.Kw_inv @ self.mu_w
        self.noise = tau.noise(model)
        mask = self.noise.mask(n)
        self.prec_v = np.where(mask, 1.0 / self.noise.sigma_v2, 0.0) if mask.any() else None
        self.v_term = (np.where(mask, model.v, 0.0) * self.prec_v) if mask.any() else None

    def step(self, state: VBState) -> VBState:
        n = self.model.n
        y = self.model.y
        sy2 = self.noise.sigma_y2

        g, P_g = state.q_g.mean, state.q_g.cov
        _, T_g = shifted_sum_contraction(P_g, g)
        A = T_g / sy2 + self.Kw_inv
        rhs = toeplitz(g, n, n).T @ y / sy2 + self.Kw_inv_mu
        if self.prec_v is not None:
            A = A + np.diag(self.prec_v)
            rhs = rhs + self.v_term
        Lw, _ = chol_psd(A, name="q_w precision")
        P_w_new = chol_inverse(Lw)
        w_new = chol_solve(Lw, rhs)

        _, T_w = shifted_sum_contraction(P_w_new, w_new)
        A = T_w / sy2 + self.Kg_inv
        rhs = toeplitz(w_new, n, n).T @ y / sy2 + self.Kg_inv_mu
        Lg, _ = chol_psd(A, name="q_g precision")
        P_g_new = chol_inverse(Lg)
        g_new = chol_solve(Lg, rhs)

        return VBState(
            q_g=GaussianBelief(g_new, P_g_new),
            q_w=GaussianBelief(w_new, P_w_new),
            iteration=state.iteration + 1,
            converged=state.converged,
        )


def vb_init(model: UIModel, tau: Hyperparameters) -> VBState:
    """Starting factors: covariances from the priors, means from the data.

    The input mean starts at the observed v where available and the prior
    mean elsewhere.  When that start is identically zero and nothing
    measures the input (no v, zero prior mean), the iteration would sit
    forever on the exactly-zero fixed point, so the mean falls back to
    the kernel's context signal (the known external input) or, failing
    that, the output.  The impulse-response mean starts at its prior mean
    if nonzero, else at the known-input posterior mean given the starting
    input.
    """
    n = model.n
    mu_g, K_g = model.prior_g.evaluate(n, tau.rho)
    _, K_w = model.prior_w.evaluate(n, tau.theta)
    g0, w0 = default_init(model, tau)
    if not np.any(w0):
        ctx = model.prior_w.kernel.context
        w0 = np.asarray(ctx, dtype=float).ravel().copy() if ctx is not None else model.y.copy()
        from .conditionals import cond_g_given_w

        g0 = mu_g.copy() if np.any(mu_g) else cond_g_given_w(w0, model.y, (mu_g, K_g), tau.sigma_y2).mean
    return VBState(q_g=GaussianBelief(g0, K_g), q_w=GaussianBelief(w0, K_w))


def vb_step(state: VBState, model: UIModel, tau: Hyperparameters) -> VBState:
    """One fixed-point update of both factors (input first, then system)."""
    return _VBWork(model, tau).step(state)


def _rel_change(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / (np.linalg.norm(b) + 1e-12))


def vb_solve(
    model: UIModel,
    tau: Hyperparameters,
    tol: float = 1e-6,
    max_iter: int = 500,
    init: VBState | None = None,
) -> VBState:
    """Iterate :func:`vb_step` until the factor means stabilize.

    Stops when the larger of the two relative mean changes drops below
    ``tol``; hitting ``max_iter`` first is not an error, the state is
    returned with ``converged`` False.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    with single_threaded_blas():
        work = _VBWork(model, tau)
        state = init if init is not None else vb_init(model, tau)
        for _ in range(max_iter):
            new = work.step(state)
            delta = max(_rel_change(new.q_g.mean, state.q_g.mean), _rel_change(new.q_w.mean, state.q_w.mean))
            state = new
            if delta < tol:
                state.converged = True
                return state
        state.converged = False
        return state
