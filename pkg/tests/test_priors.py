import numpy as np
import pytest

from uisid.linalg import min_eigval
from uisid.priors import (
    BASIS,
    CASCADE,
    DEGENERATE,
    FIXED_SIGNAL,
    KernelSpec,
    MeanSpec,
    PriorSpec,
    RBF,
    STABLE_SPLINE,
    cascade_kernel,
    evaluate_prior,
    legendre_basis,
    rbf_matrix,
    stable_spline_matrix,
    transform_params,
    untransform_params,
)
from uisid.toeplitz import toeplitz

from oracles import legendre_recurrence


def test_stable_spline_small_case():
    got = stable_spline_matrix(1.0, 0.5, 2)
    np.testing.assert_allclose(got, [[0.5, 0.25], [0.25, 0.25]])


def test_stable_spline_zero_scale():
    np.testing.assert_array_equal(stable_spline_matrix(0.0, 0.3, 4), np.zeros((4, 4)))


def test_stable_spline_psd_and_scaling():
    rng = np.random.default_rng(0)
    for _ in range(200):
        c = float(rng.uniform(0.1, 10.0))
        lam = float(rng.uniform(0.05, 0.95))
        n = int(rng.integers(1, 30))
        K = stable_spline_matrix(c, lam, n)
        assert np.array_equal(K, K.T)
        assert min_eigval(K) >= -1e-10 * max(1.0, float(np.max(K)))
        alpha = float(rng.uniform(0.5, 3.0))
        np.testing.assert_allclose(stable_spline_matrix(alpha * c, lam, n), alpha * K, rtol=4e-16)


def test_stable_spline_large_n_eigenvalues():
    K = stable_spline_matrix(1.0, 0.6, 50)
    assert min_eigval(K) >= -1e-10


def test_stable_spline_domain_errors():
    with pytest.raises(ValueError):
        stable_spline_matrix(-1.0, 0.5, 3)
    with pytest.raises(ValueError):
        stable_spline_matrix(1.0, 1.0, 3)
    with pytest.raises(ValueError):
        stable_spline_matrix(1.0, 0.0, 3)


def test_rbf_diagonal_and_offdiag():
    u = np.array([0.0, 1.0])
    K = rbf_matrix(2.5, 1.0, u)
    np.testing.assert_allclose(np.diag(K), [2.5, 2.5])
    np.testing.assert_allclose(K[0, 1], 2.5 * np.exp(-1.0))


def test_rbf_duplicate_inputs_rows_match():
    u = np.array([0.3, 0.3, -0.5])
    K = rbf_matrix(1.0, 0.7, u)
    np.testing.assert_allclose(K[0], K[1])
    assert min_eigval(K) >= -1e-10


def test_rbf_psd_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 25))
        u = rng.uniform(-1, 1, size=n)
        K = rbf_matrix(float(rng.uniform(0.1, 5)), float(rng.uniform(0.05, 3)), u)
        assert min_eigval(K) >= -1e-10


def test_rbf_domain_errors():
    with pytest.raises(ValueError):
        rbf_matrix(1.0, 0.0, np.zeros(3))
    with pytest.raises(ValueError):
        rbf_matrix(-0.1, 1.0, np.zeros(3))


def test_cascade_kernel_impulse_input():
    n = 5
    K1 = stable_spline_matrix(1.0, 0.5, n)
    e1 = np.zeros(n)
    e1[0] = 1.0
    np.testing.assert_allclose(cascade_kernel(K1, e1), K1, atol=1e-15)


def test_cascade_kernel_zero():
    np.testing.assert_array_equal(cascade_kernel(np.zeros((3, 3)), np.ones(3)), np.zeros((3, 3)))


def test_cascade_kernel_psd_random():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 12))
        a = rng.standard_normal((n, n))
        K1 = a @ a.T
        u = rng.standard_normal(n)
        K = cascade_kernel(K1, u)
        assert np.array_equal(K, K.T)
        assert min_eigval(K) >= -1e-10 * max(1.0, np.max(np.abs(K)))
        U = toeplitz(u, n, n)
        np.testing.assert_allclose(K, U @ K1 @ U.T, atol=1e-12 * max(1.0, np.max(np.abs(K))))


def test_cascade_kernel_dimension_mismatch():
    with pytest.raises(ValueError):
        cascade_kernel(np.eye(3), np.ones(4))


def test_legendre_low_degrees():
    x = 0.37
    basis = legendre_basis([x], 3)
    np.testing.assert_allclose(basis[0], [1.0, x, 0.5 * (3 * x * x - 1)])


def test_legendre_at_one():
    basis = legendre_basis([1.0], 8)
    np.testing.assert_allclose(basis[0], np.ones(8))


def test_legendre_half_degree_two():
    np.testing.assert_allclose(legendre_basis([0.5], 3)[0, 2], -0.125)


def test_legendre_rejects_out_of_range():
    with pytest.raises(ValueError):
        legendre_basis([1.2], 2)


def test_legendre_matches_recurrence_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = int(rng.integers(1, 12))
        u = rng.uniform(-1, 1, size=int(rng.integers(1, 20)))
        basis = legendre_basis(u, p)
        for j in range(p):
            np.testing.assert_allclose(basis[:, j], legendre_recurrence(u, j), atol=1e-12)


def test_legendre_recurrence_residual():
    rng = np.random.default_rng(4)
    u = rng.uniform(-1, 1, size=50)
    p = 9
    basis = legendre_basis(u, p)
    for j in range(1, p - 1):
        resid = (j + 1) * basis[:, j + 1] - (2 * j + 1) * u * basis[:, j] + j * basis[:, j - 1]
        assert np.max(np.abs(resid)) <= 1e-12


def test_evaluate_prior_stable_spline():
    spec = PriorSpec(MeanSpec(), KernelSpec(STABLE_SPLINE, (2.0, 0.4)))
    mu, K = evaluate_prior(spec, 5)
    np.testing.assert_array_equal(mu, np.zeros(5))
    np.testing.assert_array_equal(K, stable_spline_matrix(2.0, 0.4, 5))


def test_evaluate_prior_degenerate_zero_matrix():
    u = np.arange(4.0)
    spec = PriorSpec(MeanSpec(FIXED_SIGNAL, signal=u), KernelSpec(DEGENERATE))
    mu, K = evaluate_prior(spec, 4)
    np.testing.assert_array_equal(mu, u)
    assert np.all(K == 0.0)


def test_evaluate_prior_basis_mean_with_params():
    u = np.linspace(-1, 1, 6)
    phi = legendre_basis(u, 3)
    spec = PriorSpec(MeanSpec(BASIS, basis=phi, coeff=np.zeros(3)), KernelSpec(DEGENERATE))
    mu, _ = spec.evaluate(6, params=[1.0, 2.0, 0.5])
    np.testing.assert_allclose(mu, phi @ [1.0, 2.0, 0.5])


def test_evaluate_prior_kernel_params_override():
    u = np.linspace(-1, 1, 5)
    spec = PriorSpec(MeanSpec(), KernelSpec(RBF, (1.0, 0.6), context=u))
    _, K = spec.evaluate(5, params=[2.0, 0.3])
    np.testing.assert_array_equal(K, rbf_matrix(2.0, 0.3, u))


def test_prior_param_routing_and_free_indices():
    u = np.linspace(-1, 1, 5)
    pinned = PriorSpec(MeanSpec(), KernelSpec(RBF, (1.0, 0.6), context=u, fixed=(0,)))
    np.testing.assert_array_equal(pinned.free_indices(), [1])
    basis = PriorSpec(MeanSpec(BASIS, basis=legendre_basis(u, 2), coeff=[1.0, -1.0]), KernelSpec(DEGENERATE))
    assert basis.n_params == 2
    np.testing.assert_array_equal(basis.params(), [1.0, -1.0])
    assert basis.domain() == ("identity", "identity")


def test_transforms_round_trip():
    domain = ("log", "logit", "identity")
    x = np.array([2.5, 0.7, -3.0])
    z = transform_params(domain, x)
    np.testing.assert_allclose(untransform_params(domain, z), x, atol=1e-12)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("nope")
    with pytest.raises(ValueError):
        KernelSpec(RBF, (1.0, 1.0))  # missing context
    with pytest.raises(ValueError):
        KernelSpec(STABLE_SPLINE, (1.0,))
    with pytest.raises(ValueError):
        MeanSpec(BASIS, basis=np.ones((3, 2)), coeff=[1.0])


def test_mean_length_validation():
    spec = PriorSpec(MeanSpec(FIXED_SIGNAL, signal=np.ones(3)), KernelSpec(DEGENERATE))
    with pytest.raises(ValueError):
        spec.evaluate(4)
