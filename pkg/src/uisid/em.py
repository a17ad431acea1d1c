"""Outer empirical-Bayes loop: Q functions, M-steps, and the EM driver.

Hyperparameters are fit by maximizing the marginal likelihood of the
data through EM.  Three interchangeable E-steps are supported:

* ``semiparam`` -- the input prior is a point mass, the g posterior is
  exactly Gaussian and the expected complete-data log likelihood has a
  closed form;
* ``mcem``      -- the expectation is replaced by an average over Gibbs
  particles from the joint posterior;
* ``vbem``      -- the expectation is taken under the mean-field
  variational factorization.

Every M-step decouples into per-block problems: kernel hyperparameters
minimize ``||m - mu||^2_{K^{-1}} + tr(K^{-1} P) + log det K`` (a
derivative-free simplex search in transformed coordinates), and the
noise variances have closed-form updates.  Additive constants are
dropped from all Q values.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.optimize

from .conditionals import GaussianBelief, semiparam_posterior_g, LOG_2PI
from .gibbs import ChainConfig, MomentSet, run_chain, sample_moments
from .linalg import chol_psd, chol_logdet, quad_form_inv, single_threaded_blas, trace_solve, symmetrize
from .model import UIModel, Hyperparameters
from .priors import PriorSpec, BASIS, transform_params, untransform_params
from .toeplitz import toeplitz, shifted_sum_contraction, convolve_truncated
from .variational import VBState, vb_solve

SEMIPARAM = "semiparam"
MCEM = "mcem"
VBEM = "vbem"
BACKENDS = (SEMIPARAM, MCEM, VBEM)

INNER_BUDGET = 200


# ---------------------------------------------------------------------------
# inner optimizer and kernel objective


def kernel_objective(matrix_fn: Callable, mu: np.ndarray, m_hat: np.ndarray, P_hat: np.ndarray) -> Callable:
    """Objective over kernel hyperparameters shared by every M-step.

    Returns a callable evaluating
    ``||m_hat - mu||^2_{K^{-1}} + tr(K^{-1} P_hat) + log det K``
    with K = matrix_fn(params).  Parameter vectors where the kernel
    cannot be factorized evaluate to a large finite penalty.
    """
    d = np.asarray(m_hat, dtype=float) - np.asarray(mu, dtype=float)

    def objective(params) -> float:
        try:
            L, _ = chol_psd(matrix_fn(params), name="kernel objective")
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            return 1e300
        val = quad_form_inv(L, d) + trace_solve(L, P_hat) + chol_logdet(L)
        return val if np.isfinite(val) else 1e300

    return objective


def prior_objective(prior: PriorSpec, n: int, m_hat: np.ndarray, P_hat: np.ndarray) -> Callable:
    """Kernel objective bound to a prior spec (mean held at the spec's own)."""
    return kernel_objective(lambda p: prior.kernel.matrix(n, p), prior.mean.vector(n), m_hat, P_hat)


def inner_optimize(objective: Callable, start, domain, free=None, budget: int = INNER_BUDGET) -> np.ndarray:
    """Derivative-free simplex minimization in transformed coordinates.

    ``domain`` names the transform per coordinate (log, logit, identity);
    ``free`` restricts the search to those indices, everything else stays
    pinned at its starting value.  The result is never worse than the
    start: the best evaluated iterate is returned, ties going to the
    first found.
    """
    start = np.asarray(start, dtype=float).ravel()
    free = np.arange(len(start)) if free is None else np.asarray(free, dtype=int)
    if len(free) == 0:
        return start.copy()

    z_full = transform_params(domain, start)

    def eval_z(z_free) -> float:
        z = z_full.copy()
        z[free] = z_free
        with np.errstate(over="ignore", under="ignore"):
            params = untransform_params(domain, z)
        if not np.all(np.isfinite(params)):
            return 1e300
        return objective(params)

    res = scipy.optimize.minimize(
        eval_z,
        z_full[free],
        method="Nelder-Mead",
        options={"maxfev": budget, "xatol": 1e-5, "fatol": 1e-9, "adaptive": False},
    )
    if res.fun <= eval_z(z_full[free]):
        z_best = z_full.copy()
        z_best[free] = res.x
        return untransform_params(domain, z_best)
    return start.copy()


# ---------------------------------------------------------------------------
# semiparametric backend (point-mass input prior)


def _v_blocks(model: UIModel, tau: Hyperparameters, resid_sq: float, extra: float = 0.0) -> float:
    """-(resid_sq + extra)/(2 sv2) - (n_obs/2) log sv2, or 0 when no input data."""
    n_v = tau.noise(model).n_v_observed(model.n)
    if n_v == 0:
        return 0.0
    return -(resid_sq + extra) / (2.0 * tau.sigma_v2) - 0.5 * n_v * np.log(tau.sigma_v2)


def _masked_sq(model: UIModel, tau: Hyperparameters, mu_w: np.ndarray) -> float:
    mask = tau.noise(model).mask(model.n)
    if not mask.any():
        return 0.0
    d = model.v[mask] - mu_w[mask]
    return float(d @ d)


def _kernel_block(prior: PriorSpec, n: int, params, m_hat, P_hat) -> float:
    mu, K = prior.evaluate(n, params)
    L, _ = chol_psd(K, name="kernel block")
    return -0.5 * quad_form_inv(L, m_hat - mu) - 0.5 * trace_solve(L, P_hat) - 0.5 * chol_logdet(L)


def q_semiparam(tau: Hyperparameters, g_hat: np.ndarray, P_g: np.ndarray, model: UIModel) -> float:
    """Expected complete-data log likelihood for the point-mass input model.

    ``g_hat`` and ``P_g`` are the posterior moments of g at the previous
    hyperparameter estimate.  Constants dropped.
    """
    n = model.n
    mu_w, _ = model.prior_w.evaluate(n, tau.theta)
    G_hat = toeplitz(g_hat, n, n)
    S_g, _ = shifted_sum_contraction(P_g, np.zeros(n))
    resid_y = model.y - G_hat @ mu_w
    R_y = float(resid_y @ resid_y)
    quad = float(mu_w @ S_g @ mu_w)
    value = _v_blocks(model, tau, _masked_sq(model, tau, mu_w))
    value += -(R_y + quad) / (2.0 * tau.sigma_y2) - 0.5 * n * np.log(tau.sigma_y2)
    value += _kernel_block(model.prior_g, n, tau.rho, g_hat, P_g)
    return value


def _theta_linear_solve(model, tau, G_hat, S_g) -> np.ndarray:
    """Exact input-coefficient update for a linear mean, frozen variances."""
    phi = np.asarray(model.prior_w.mean.basis, dtype=float)
    A = phi.T @ (G_hat.T @ G_hat + S_g) @ phi / tau.sigma_y2
    b = phi.T @ (G_hat.T @ model.y) / tau.sigma_y2
    mask = tau.noise(model).mask(model.n)
    if mask.any():
        phi_m = phi[mask]
        A = A + phi_m.T @ phi_m / tau.sigma_v2
        b = b + phi_m.T @ model.v[mask] / tau.sigma_v2
    return np.linalg.solve(A, b)


def m_step_semiparam(
    g_hat: np.ndarray,
    P_g: np.ndarray,
    model: UIModel,
    tau: Hyperparameters,
    linear_theta: bool = True,
) -> Hyperparameters:
    """Conditional-maximization update for the point-mass input model.

    Order: kernel hyperparameters of g, then the input parameters with
    the noise variances frozen at the incoming values, then closed-form
    variance updates at the fresh input parameters.  A linear basis mean
    is solved exactly through its normal equations unless
    ``linear_theta`` is False (the generic simplex path, kept for
    cross-checking).
    """
    n = model.n
    rho_new = inner_optimize(
        prior_objective(model.prior_g, n, g_hat, P_g),
        tau.rho,
        model.prior_g.domain(),
        free=model.prior_g.free_indices(),
    )

    G_hat = toeplitz(g_hat, n, n)
    S_g, _ = shifted_sum_contraction(P_g, np.zeros(n))
    if model.prior_w.n_params == 0:
        theta_new = tau.theta.copy()
    elif model.prior_w.mean.kind == BASIS and linear_theta:
        theta_new = _theta_linear_solve(model, tau, G_hat, S_g)
    else:

        def theta_objective(params):
            mu_w = model.prior_w.mean.vector(n, coeff=params)
            resid_y = model.y - G_hat @ mu_w
            val = (float(resid_y @ resid_y) + float(mu_w @ S_g @ mu_w)) / (2.0 * tau.sigma_y2)
            mask = tau.noise(model).mask(n)
            if mask.any():
                d = model.v[mask] - mu_w[mask]
                val += float(d @ d) / (2.0 * tau.sigma_v2)
            return val

        theta_new = inner_optimize(
            theta_objective, tau.theta, model.prior_w.domain(), free=model.prior_w.free_indices()
        )

    mu_w_new = model.prior_w.mean.vector(n, coeff=theta_new if model.prior_w.mean.kind == BASIS else None)
    resid_y = model.y - G_hat @ mu_w_new
    sigma_y2_new = (float(resid_y @ resid_y) + float(mu_w_new @ S_g @ mu_w_new)) / n
    noise = tau.noise(model)
    n_v = noise.n_v_observed(n)
    if n_v > 0:
        sigma_v2_new = _masked_sq(model, tau, mu_w_new) / n_v
    else:
        sigma_v2_new = tau.sigma_v2
    return Hyperparameters(rho_new, theta_new, sigma_y2_new, sigma_v2_new)


def marginal_loglik_semiparam(model: UIModel, tau: Hyperparameters) -> float:
    """Exact marginal log likelihood when the input prior is a point mass.

    y is Gaussian with mean T(mu_w) mu_g and covariance
    T(mu_w) K_g T(mu_w)^T + sy2 I, independent of the input-measurement
    block.  All constants kept.
    """
    n = model.n
    mu_g, K_g = model.prior_g.evaluate(n, tau.rho)
    mu_w, _ = model.prior_w.evaluate(n, tau.theta)
    M = toeplitz(mu_w, n, n)
    cov = symmetrize(M @ K_g @ M.T) + tau.sigma_y2 * np.eye(n)
    L, _ = chol_psd(cov, name="marginal covariance")
    resid = model.y - M @ mu_g
    value = -0.5 * quad_form_inv(L, resid) - 0.5 * chol_logdet(L) - 0.5 * n * LOG_2PI
    mask = tau.noise(model).mask(n)
    if mask.any():
        d = model.v[mask] - mu_w[mask]
        k = int(mask.sum())
        value += -0.5 * float(d @ d) / tau.sigma_v2 - 0.5 * k * (np.log(tau.sigma_v2) + LOG_2PI)
    return value


# ---------------------------------------------------------------------------
# Monte-Carlo backend


def q_mc(tau: Hyperparameters, moments: MomentSet, model: UIModel) -> float:
    """Particle approximation of the expected complete-data log likelihood."""
    n = model.n
    value = _v_blocks(model, tau, moments.R_v or 0.0) if moments.R_v is not None else 0.0
    value += -moments.R_y / (2.0 * tau.sigma_y2) - 0.5 * n * np.log(tau.sigma_y2)
    value += _kernel_block(model.prior_g, n, tau.rho, moments.g_hat, moments.P_g)
    value += _kernel_block(model.prior_w, n, tau.theta, moments.w_hat, moments.P_w)
    return value


def m_step_mc(moments: MomentSet, model: UIModel, tau: Hyperparameters) -> Hyperparameters:
    """Decoupled kernel optimizations plus closed-form variance updates."""
    n = model.n
    rho_new = inner_optimize(
        prior_objective(model.prior_g, n, moments.g_hat, moments.P_g),
        tau.rho,
        model.prior_g.domain(),
        free=model.prior_g.free_indices(),
    )
    theta_new = inner_optimize(
        prior_objective(model.prior_w, n, moments.w_hat, moments.P_w),
        tau.theta,
        model.prior_w.domain(),
        free=model.prior_w.free_indices(),
    )
    sigma_y2_new = moments.R_y / n
    n_v = tau.noise(model).n_v_observed(n)
    sigma_v2_new = moments.R_v / n_v if (n_v > 0 and moments.R_v is not None) else tau.sigma_v2
    return Hyperparameters(rho_new, theta_new, sigma_y2_new, sigma_v2_new)


# ---------------------------------------------------------------------------
# variational backend


@dataclass
class _VBMoments:
    """Data-fit statistics of a variational state against one model."""

    R_y: float
    quad_S_w: float
    trace_TP: float
    R_v: Optional[float]
    trace_P_w_obs: float

    @property
    def output_fit(self) -> float:
        return self.R_y + self.quad_S_w + self.trace_TP


def _vb_moments(state: VBState, model: UIModel, tau: Hyperparameters) -> _VBMoments:
    g_hat, P_g = state.q_g.mean, state.q_g.cov
    w_hat, P_w = state.q_w.mean, state.q_w.cov
    S_w, T_w = shifted_sum_contraction(P_w, w_hat)
    resid = model.y - convolve_truncated(w_hat, g_hat)
    R_y = float(resid @ resid)
    quad = float(g_hat @ S_w @ g_hat)
    tr = float(np.sum(T_w * P_g))
    mask = tau.noise(model).mask(model.n)
    if mask.any():
        d = model.v[mask] - w_hat[mask]
        return _VBMoments(R_y, quad, tr, float(d @ d), float(np.trace(P_w[np.ix_(mask, mask)])))
    return _VBMoments(R_y, quad, tr, None, 0.0)


def q_vb(tau: Hyperparameters, state: VBState, model: UIModel) -> float:
    """Expected complete-data log likelihood under the factorized posterior.

    The expectation of the squared output residual picks up the
    second-moment corrections ``||g||^2_{S_w} + tr(T_w P_g)`` and the
    input-measurement block picks up the observed-sample trace of P_w;
    both enter with positive sign inside the negated quadratic terms.
    Constants dropped.
    """
    n = model.n
    vm = _vb_moments(state, model, tau)
    value = _v_blocks(model, tau, vm.R_v, vm.trace_P_w_obs) if vm.R_v is not None else 0.0
    value += -vm.output_fit / (2.0 * tau.sigma_y2) - 0.5 * n * np.log(tau.sigma_y2)
    value += _kernel_block(model.prior_g, n, tau.rho, state.q_g.mean, state.q_g.cov)
    value += _kernel_block(model.prior_w, n, tau.theta, state.q_w.mean, state.q_w.cov)
    return value


def m_step_vb(state: VBState, model: UIModel, tau: Hyperparameters) -> Hyperparameters:
    """Decoupled kernel optimizations plus variance updates from VB moments."""
    n = model.n
    rho_new = inner_optimize(
        prior_objective(model.prior_g, n, state.q_g.mean, state.q_g.cov),
        tau.rho,
        model.prior_g.domain(),
        free=model.prior_g.free_indices(),
    )
    theta_new = inner_optimize(
        prior_objective(model.prior_w, n, state.q_w.mean, state.q_w.cov),
        tau.theta,
        model.prior_w.domain(),
        free=model.prior_w.free_indices(),
    )
    vm = _vb_moments(state, model, tau)
    sigma_y2_new = vm.output_fit / n
    n_v = tau.noise(model).n_v_observed(n)
    if n_v > 0 and vm.R_v is not None:
        sigma_v2_new = (vm.R_v + vm.trace_P_w_obs) / n_v
    else:
        sigma_v2_new = tau.sigma_v2
    return Hyperparameters(rho_new, theta_new, sigma_y2_new, sigma_v2_new)


def vb_elbo(model: UIModel, tau: Hyperparameters, state: VBState) -> float:
    """Evidence lower bound of a variational state (constants included).

    Equals the expected complete-data log likelihood plus the entropies
    of the two Gaussian factors; non-decreasing along the fixed-point
    iteration.
    """
    n = model.n
    n_v = tau.noise(model).n_v_observed(n)
    const = -0.5 * (3 * n + n_v) * LOG_2PI
    value = q_vb(tau, state, model) + const
    for belief in (state.q_g, state.q_w):
        L, _ = chol_psd(belief.cov, name="factor covariance")
        value += 0.5 * (belief.dim * (1.0 + LOG_2PI) + chol_logdet(L))
    return value


# ---------------------------------------------------------------------------
# EM driver


@dataclass
class EMRecord:
    iteration: int
    tau: Hyperparameters
    q_value: float
    exact_loglik: Optional[float]
    wall_time: float


@dataclass
class EMTrace:
    """Per-iteration diagnostics of one EM run."""

    records: list = field(default_factory=list)

    def append(self, record: EMRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def q_values(self) -> np.ndarray:
        return np.array([r.q_value for r in self.records])

    def exact_logliks(self) -> np.ndarray:
        return np.array([np.nan if r.exact_loglik is None else r.exact_loglik for r in self.records])

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if not self.records:
                writer.writerow(["iteration"])
                return
            first = self.records[0].tau
            header = (
                ["iteration"]
                + [f"rho{i}" for i in range(len(first.rho))]
                + [f"theta{i}" for i in range(len(first.theta))]
                + ["sigma_y2", "sigma_v2", "q", "exact_loglik", "wall_time"]
            )
            writer.writerow(header)
            for r in self.records:
                row = (
                    [r.iteration]
                    + [repr(x) for x in r.tau.rho]
                    + [repr(x) for x in r.tau.theta]
                    + [repr(r.tau.sigma_y2), repr(r.tau.sigma_v2), repr(r.q_value)]
                    + ["" if r.exact_loglik is None else repr(r.exact_loglik), repr(r.wall_time)]
                )
                writer.writerow(row)


@dataclass
class EMResult:
    tau: Hyperparameters
    trace: EMTrace
    g_hat: np.ndarray
    w_hat: np.ndarray
    belief_g: GaussianBelief
    belief_w: GaussianBelief
    converged: bool
    backend: str


def _check_backend(model: UIModel, backend: str):
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == SEMIPARAM:
        if not model.prior_w.degenerate:
            raise ValueError("the semiparametric backend needs a degenerate input prior")
        if model.prior_g.degenerate:
            raise ValueError("the semiparametric backend needs a proper prior on g")
    else:
        if model.prior_g.degenerate or model.prior_w.degenerate:
            raise ValueError(f"the {backend} backend needs non-degenerate priors on both unknowns")


def _chain_for_iteration(chain: ChainConfig, k: int) -> ChainConfig:
    # Fresh, reproducible randomness per E-step: substream (seed, k).
    return replace(chain, seed=np.random.SeedSequence(entropy=chain.seed, spawn_key=(k,)), trace_path=None)


def run_em(
    model: UIModel,
    backend: str,
    tau0: Optional[Hyperparameters] = None,
    rel_tol: float = 1e-2,
    max_outer: int = 50,
    chain: Optional[ChainConfig] = None,
    vb_tol: float = 1e-6,
    vb_max_iter: int = 500,
) -> EMResult:
    """Iterate E and M steps until the hyperparameters stabilize.

    Stops when the largest relative change across finite hyperparameter
    components falls below ``rel_tol`` (or after ``max_outer``
    iterations, flagged as not converged).  The E-step is then re-run at
    the final estimate and the posterior means of g and w are returned:
    the exact conditional mean for the semiparametric backend, particle
    averages for MCEM, factor means for VBEM.

    Parameters
    ----------
    model : UIModel
    backend : {"semiparam", "mcem", "vbem"}
    tau0 : Hyperparameters, optional
        Starting point; defaults to the values stored on the model.
    chain : ChainConfig, optional
        Burn-in / retained / seed for MCEM; per-iteration chains use
        substreams of its seed.
    """
    _check_backend(model, backend)
    tau = tau0 if tau0 is not None else model.initial_hyperparameters()
    if chain is None:
        chain = ChainConfig()
    trace = EMTrace()
    converged = False
    iterations = 0
    vb_state = None

    with single_threaded_blas():
        for k in range(max_outer):
            t0 = time.perf_counter()
            if backend == SEMIPARAM:
                mu_w, _ = model.prior_w.evaluate(model.n, tau.theta)
                mu_g, K_g = model.prior_g.evaluate(model.n, tau.rho)
                belief = semiparam_posterior_g(mu_w, model.y, (mu_g, K_g), tau.sigma_y2)
                tau_new = m_step_semiparam(belief.mean, belief.cov, model, tau)
                q_value = q_semiparam(tau_new, belief.mean, belief.cov, model)
                exact = marginal_loglik_semiparam(model, tau_new)
            elif backend == MCEM:
                samples = run_chain(model, tau, _chain_for_iteration(chain, k))
                moments = sample_moments(samples, model.y, model.v, tau.noise(model))
                tau_new = m_step_mc(moments, model, tau)
                q_value = q_mc(tau_new, moments, model)
                exact = None
            else:
                # Warm start from the previous fixed point: the update map
                # contracts slowly along the (g, w) scale ridge once the
                # output noise is small, and feeding the M-step a state
                # still in transit destabilizes the hyperparameter path.
                vb_state = vb_solve(model, tau, tol=vb_tol, max_iter=vb_max_iter, init=vb_state)
                tau_new = m_step_vb(vb_state, model, tau)
                q_value = q_vb(tau_new, vb_state, model)
                exact = None

            trace.append(EMRecord(k, tau_new, q_value, exact, time.perf_counter() - t0))
            delta = tau.rel_change(tau_new)
            tau = tau_new
            iterations = k + 1
            if delta < rel_tol:
                converged = True
                break

        if backend == SEMIPARAM:
            mu_w, _ = model.prior_w.evaluate(model.n, tau.theta)
            mu_g, K_g = model.prior_g.evaluate(model.n, tau.rho)
            belief_g = semiparam_posterior_g(mu_w, model.y, (mu_g, K_g), tau.sigma_y2)
            belief_w = GaussianBelief(mu_w, np.zeros((model.n, model.n)))
        elif backend == MCEM:
            samples = run_chain(model, tau, _chain_for_iteration(chain, iterations))
            moments = sample_moments(samples, model.y, model.v, tau.noise(model))
            belief_g = GaussianBelief(moments.g_hat, moments.P_g)
            belief_w = GaussianBelief(moments.w_hat, moments.P_w)
        else:
            vb_state = vb_solve(model, tau, tol=vb_tol, max_iter=vb_max_iter, init=vb_state)
            belief_g = vb_state.q_g
            belief_w = vb_state.q_w

    return EMResult(tau, trace, belief_g.mean.copy(), belief_w.mean.copy(), belief_g, belief_w, converged, backend)
