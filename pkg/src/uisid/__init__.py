"""Empirical-Bayes identification of linear systems with uncertain inputs.

A linear time-invariant system and its partially known input signal are
both modeled as Gaussian processes; hyperparameters are fit by EM on the
marginal likelihood with a closed-form, a Gibbs-sampling, or a
variational E-step, and the unknowns are estimated by their posterior
means.
"""

from .conditionals import (
    GaussianBelief,
    NoiseModel,
    cond_g_given_w,
    cond_w_given_g,
    semiparam_posterior_g,
    parametric_nll,
)
from .em import (
    EMResult,
    EMTrace,
    MCEM,
    SEMIPARAM,
    VBEM,
    inner_optimize,
    kernel_objective,
    m_step_mc,
    m_step_semiparam,
    m_step_vb,
    marginal_loglik_semiparam,
    q_mc,
    q_semiparam,
    q_vb,
    run_em,
    vb_elbo,
)
from .gibbs import ChainConfig, MomentSet, draw_gaussian, run_chain, sample_moments
from .model import Hyperparameters, UIModel
from .priors import (
    KernelSpec,
    MeanSpec,
    PriorSpec,
    cascade_kernel,
    evaluate_prior,
    legendre_basis,
    rbf_matrix,
    stable_spline_matrix,
)
from .toeplitz import commute, shifted_sum_contraction, toeplitz
from .variational import VBState, vb_solve, vb_step
from .metrics import (
    fit_metric,
    known_input_eb,
    naive_cascade,
    nonlinearity_fit,
    two_stage_cascade,
)

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "EMResult",
    "EMTrace",
    "GaussianBelief",
    "Hyperparameters",
    "KernelSpec",
    "MCEM",
    "MeanSpec",
    "MomentSet",
    "NoiseModel",
    "PriorSpec",
    "SEMIPARAM",
    "UIModel",
    "VBEM",
    "VBState",
    "cascade_kernel",
    "commute",
    "cond_g_given_w",
    "cond_w_given_g",
    "draw_gaussian",
    "evaluate_prior",
    "fit_metric",
    "inner_optimize",
    "kernel_objective",
    "known_input_eb",
    "legendre_basis",
    "m_step_mc",
    "m_step_semiparam",
    "m_step_vb",
    "marginal_loglik_semiparam",
    "naive_cascade",
    "nonlinearity_fit",
    "parametric_nll",
    "q_mc",
    "q_semiparam",
    "q_vb",
    "rbf_matrix",
    "run_chain",
    "run_em",
    "sample_moments",
    "semiparam_posterior_g",
    "shifted_sum_contraction",
    "stable_spline_matrix",
    "toeplitz",
    "two_stage_cascade",
    "vb_elbo",
    "vb_solve",
    "vb_step",
]
