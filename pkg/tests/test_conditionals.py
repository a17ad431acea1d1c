import numpy as np
import pytest

from uisid.conditionals import (
    GaussianBelief,
    NoiseModel,
    cond_g_given_w,
    cond_w_given_g,
    log_complete_semiparam,
    log_joint,
    parametric_nll,
    semiparam_posterior_g,
)
from uisid.linalg import min_eigval
from uisid.priors import stable_spline_matrix
from uisid.toeplitz import commute, toeplitz

from oracles import cond_g_oracle, cond_w_oracle, mvn_logpdf


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n) * 0.1)


def test_gaussian_belief_validation():
    with pytest.raises(ValueError):
        GaussianBelief(np.zeros(2), np.ones((3, 3)))
    with pytest.raises(ValueError):
        GaussianBelief(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_noise_model_masks():
    noise = NoiseModel(1.0, np.inf)
    assert not noise.mask(4).any()
    assert noise.n_v_observed(4) == 0
    partial = NoiseModel(1.0, 2.0, v_mask=[True, False, True])
    np.testing.assert_array_equal(partial.mask(3), [True, False, True])
    assert partial.n_v_observed(3) == 2
    with pytest.raises(ValueError):
        NoiseModel(0.0)
    with pytest.raises(ValueError):
        NoiseModel(1.0, -1.0)


def test_cond_g_scalar_bayes():
    belief = cond_g_given_w([1.0], [2.0], (np.zeros(1), np.eye(1)), 1.0)
    np.testing.assert_allclose(belief.cov, [[0.5]])
    np.testing.assert_allclose(belief.mean, [1.0])


def test_cond_g_uninformative_returns_prior():
    rng = np.random.default_rng(0)
    n = 6
    mu_g = rng.standard_normal(n)
    K_g = random_spd(rng, n)
    w = rng.standard_normal(n)
    y = rng.standard_normal(n)
    belief = cond_g_given_w(w, y, (mu_g, K_g), 1e12)
    assert np.linalg.norm(belief.mean - mu_g) <= 1e-3 * np.linalg.norm(mu_g)


def test_cond_g_matches_joint_oracle():
    rng = np.random.default_rng(1)
    for _ in range(25):
        n = int(rng.integers(1, 6))
        mu_g = rng.standard_normal(n)
        K_g = random_spd(rng, n)
        w = rng.standard_normal(n)
        y = rng.standard_normal(n)
        sy2 = float(rng.uniform(0.05, 2.0))
        belief = cond_g_given_w(w, y, (mu_g, K_g), sy2)
        mean_ref, cov_ref = cond_g_oracle(w, y, mu_g, K_g, sy2)
        np.testing.assert_allclose(belief.mean, mean_ref, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(belief.cov, cov_ref, rtol=1e-10, atol=1e-12)


def test_cond_w_scalar_bayes():
    belief = cond_w_given_g([1.0], [3.0], [0.0], (np.zeros(1), np.eye(1)), NoiseModel(1.0, 1.0))
    np.testing.assert_allclose(belief.cov, [[1.0 / 3.0]])
    np.testing.assert_allclose(belief.mean, [1.0])


def test_cond_w_no_data_terms_returns_prior():
    rng = np.random.default_rng(2)
    n = 5
    mu_w = rng.standard_normal(n)
    K_w = random_spd(rng, n)
    belief = cond_w_given_g(np.zeros(n), np.zeros(n), None, (mu_w, K_w), NoiseModel(1.0, np.inf))
    np.testing.assert_allclose(belief.mean, mu_w, atol=1e-10)
    np.testing.assert_allclose(belief.cov, K_w, rtol=1e-8, atol=1e-10)


def test_cond_w_matches_joint_oracle():
    rng = np.random.default_rng(3)
    for _ in range(25):
        n = int(rng.integers(1, 6))
        mu_w = rng.standard_normal(n)
        K_w = random_spd(rng, n)
        g = rng.standard_normal(n)
        y = rng.standard_normal(n)
        v = rng.standard_normal(n)
        sy2 = float(rng.uniform(0.05, 2.0))
        sv2 = float(rng.uniform(0.05, 2.0))
        belief = cond_w_given_g(g, y, v, (mu_w, K_w), NoiseModel(sy2, sv2))
        mean_ref, cov_ref = cond_w_oracle(g, y, v, mu_w, K_w, sy2, sv2)
        np.testing.assert_allclose(belief.mean, mean_ref, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(belief.cov, cov_ref, rtol=1e-10, atol=1e-12)


def test_cond_w_partial_mask_matches_oracle():
    rng = np.random.default_rng(4)
    for _ in range(25):
        n = int(rng.integers(2, 6))
        mask = rng.uniform(size=n) < 0.6
        mu_w = rng.standard_normal(n)
        K_w = random_spd(rng, n)
        g = rng.standard_normal(n)
        y = rng.standard_normal(n)
        v = rng.standard_normal(n)
        noise = NoiseModel(0.5, 0.8, v_mask=mask)
        belief = cond_w_given_g(g, y, v, (mu_w, K_w), noise)
        mean_ref, cov_ref = cond_w_oracle(g, y, v, mu_w, K_w, 0.5, 0.8, mask=mask)
        np.testing.assert_allclose(belief.mean, mean_ref, rtol=1e-9, atol=1e-11)
        np.testing.assert_allclose(belief.cov, cov_ref, rtol=1e-9, atol=1e-11)


def test_cond_w_infinite_variance_bit_identical_to_term_deletion():
    rng = np.random.default_rng(5)
    n = 4
    mu_w = rng.standard_normal(n)
    K_w = random_spd(rng, n)
    g = rng.standard_normal(n)
    y = rng.standard_normal(n)
    a = cond_w_given_g(g, y, None, (mu_w, K_w), NoiseModel(0.3, np.inf))
    b = cond_w_given_g(g, y, rng.standard_normal(n), (mu_w, K_w), NoiseModel(0.3, 1.0, v_mask=np.zeros(n, bool)))
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.cov, b.cov)


def test_semiparam_posterior_matches_known_input_conditional():
    rng = np.random.default_rng(6)
    n = 5
    mu_w = rng.standard_normal(n)
    mu_g = rng.standard_normal(n)
    K_g = random_spd(rng, n)
    y = rng.standard_normal(n)
    a = semiparam_posterior_g(mu_w, y, (mu_g, K_g), 0.7)
    b = cond_g_given_w(mu_w, y, (mu_g, K_g), 0.7)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.cov, b.cov)


def test_semiparam_posterior_impulse_mean():
    n = 4
    K_g = stable_spline_matrix(1.0, 0.5, n)
    e1 = np.zeros(n)
    e1[0] = 1.0
    y = np.arange(1.0, n + 1)
    belief = semiparam_posterior_g(e1, y, (np.zeros(n), K_g), 2.0)
    expected_prec = np.eye(n) / 2.0 + np.linalg.inv(K_g)
    np.testing.assert_allclose(belief.cov, np.linalg.inv(expected_prec), rtol=1e-8)


def test_posterior_covariances_psd():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        K = random_spd(rng, n)
        w = rng.standard_normal(n)
        y = rng.standard_normal(n)
        belief = cond_g_given_w(w, y, (np.zeros(n), K), float(rng.uniform(0.05, 5)))
        assert min_eigval(belief.cov) >= -1e-8


def test_parametric_nll_perfect_fit():
    n = 5
    mu_w = np.array([1.0, 0.5, -0.2, 0.0, 0.3])
    mu_g = np.array([0.8, 0.4, 0.2, 0.1, 0.05])
    y = commute(mu_w, mu_g)
    v = mu_w.copy()
    assert parametric_nll(mu_g, mu_w, y, v, NoiseModel(1.0, 1.0)) == pytest.approx(0.0, abs=1e-12)


def test_parametric_nll_log_term():
    n = 4
    mu_w = np.ones(n)
    mu_g = np.ones(n)
    y = commute(mu_w, mu_g)
    base = parametric_nll(mu_g, mu_w, y, mu_w, NoiseModel(1.0, 1.0))
    doubled = parametric_nll(mu_g, mu_w, y, mu_w, NoiseModel(2.0, 1.0))
    assert doubled - base == pytest.approx(0.5 * n * np.log(2.0), abs=1e-12)


def test_parametric_nll_matches_density_oracle():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n = int(rng.integers(1, 6))
        mu_w = rng.standard_normal(n)
        mu_g = rng.standard_normal(n)
        y = rng.standard_normal(n)
        v = rng.standard_normal(n)
        sy2, sv2 = rng.uniform(0.1, 3.0, size=2)
        noise = NoiseModel(float(sy2), float(sv2))
        got = parametric_nll(mu_g, mu_w, y, v, noise)
        W = toeplitz(mu_w, n, n)
        ref = -mvn_logpdf(y, W @ mu_g, sy2 * np.eye(n)) - mvn_logpdf(v, mu_w, sv2 * np.eye(n))
        ref -= n * np.log(2 * np.pi)  # constants dropped in the implementation
        np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-10)


def test_parametric_nll_drops_missing_input_block():
    rng = np.random.default_rng(9)
    n = 3
    mu_w = rng.standard_normal(n)
    mu_g = rng.standard_normal(n)
    y = rng.standard_normal(n)
    got = parametric_nll(mu_g, mu_w, y, None, NoiseModel(0.5, np.inf))
    resid = y - commute(mu_w, mu_g)
    expect = float(resid @ resid) / 1.0 + 0.5 * n * np.log(0.5)
    np.testing.assert_allclose(got, expect, atol=1e-12)


def test_log_joint_matches_density_oracle():
    rng = np.random.default_rng(10)
    for _ in range(30):
        n = int(rng.integers(1, 5))
        mu_g, mu_w, g, w, y, v = rng.standard_normal((6, n))
        K_g = random_spd(rng, n)
        K_w = random_spd(rng, n)
        noise = NoiseModel(float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 2)))
        got = log_joint(y, v, g, w, (mu_g, K_g), (mu_w, K_w), noise)
        W = toeplitz(w, n, n)
        ref = (
            mvn_logpdf(y, W @ g, noise.sigma_y2 * np.eye(n))
            + mvn_logpdf(v, w, noise.sigma_v2 * np.eye(n))
            + mvn_logpdf(g, mu_g, K_g)
            + mvn_logpdf(w, mu_w, K_w)
        )
        np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-9)


def test_log_joint_batched_matches_loop():
    rng = np.random.default_rng(11)
    n, draws = 3, 7
    mu_g, mu_w = rng.standard_normal((2, n))
    K_g = random_spd(rng, n)
    K_w = random_spd(rng, n)
    y, v = rng.standard_normal((2, n))
    gs = rng.standard_normal((draws, n))
    ws = rng.standard_normal((draws, n))
    noise = NoiseModel(0.4, 0.9)
    batch = log_joint(y, v, gs, ws, (mu_g, K_g), (mu_w, K_w), noise)
    single = [log_joint(y, v, gs[i], ws[i], (mu_g, K_g), (mu_w, K_w), noise) for i in range(draws)]
    np.testing.assert_allclose(batch, single, rtol=1e-12)


def test_log_complete_semiparam_matches_oracle():
    rng = np.random.default_rng(12)
    for _ in range(30):
        n = int(rng.integers(1, 5))
        mu_g, mu_w, g, y, v = rng.standard_normal((5, n))
        K_g = random_spd(rng, n)
        noise = NoiseModel(float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 2)))
        got = log_complete_semiparam(y, v, g, mu_w, (mu_g, K_g), noise)
        W = toeplitz(mu_w, n, n)
        ref = (
            mvn_logpdf(y, W @ g, noise.sigma_y2 * np.eye(n))
            + mvn_logpdf(v, mu_w, noise.sigma_v2 * np.eye(n))
            + mvn_logpdf(g, mu_g, K_g)
        )
        np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-9)
