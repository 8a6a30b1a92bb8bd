import math

import numpy as np
import numpy.testing as npt
import pytest

from nsmi.denoiser import (
    GaussianDenoiser,
    GaussianPrior,
    gaussian_posterior_mean,
    gaussian_predict_eps,
)
from nsmi.errors import ParameterError, ShapeError
from nsmi.schedule import build_linear_schedule, ddim_step, ddim_timesteps


def quadrature_posterior_mean(mu0, v0, alpha_bar, x_t):
    # brute-force Bayes: prior N(mu0, v0), likelihood x_t | x0 ~
    # N(sqrt(ab) x0, 1 - ab), integrated on a wide grid
    grid = np.linspace(mu0 - 12 * math.sqrt(v0), mu0 + 12 * math.sqrt(v0), 40001)
    log_post = (
        -0.5 * (grid - mu0) ** 2 / v0
        - 0.5 * (x_t - math.sqrt(alpha_bar) * grid) ** 2 / (1 - alpha_bar)
    )
    w = np.exp(log_post - log_post.max())
    return float(np.trapezoid(grid * w, grid) / np.trapezoid(w, grid))


def test_posterior_mean_matches_quadrature_scalar_case():
    # mu0 = 0, v0 = 1, alpha_bar = 0.5, x_t = 1
    s = build_linear_schedule(2, 0.5, 0.5)
    prior = GaussianPrior(mean=0.0, var=1.0)
    mean = gaussian_posterior_mean(prior, s, np.array(1.0), 1)
    oracle = quadrature_posterior_mean(0.0, 1.0, 0.5, 1.0)
    npt.assert_allclose(mean, oracle, rtol=1e-8)
    npt.assert_allclose(mean, math.sqrt(0.5), rtol=1e-12)
    eps = gaussian_predict_eps(prior, s, np.array(1.0), 1)
    npt.assert_allclose(eps, (1.0 - math.sqrt(0.5) * math.sqrt(0.5)) / math.sqrt(0.5))


def test_posterior_mean_matches_quadrature_random_cases():
    rng = np.random.default_rng(17)
    s = build_linear_schedule(8, 0.02, 0.3)
    for _ in range(5):
        mu0 = float(rng.uniform(-1, 1))
        v0 = float(rng.uniform(0.1, 2.0))
        t = int(rng.integers(1, 9))
        x_t = float(rng.uniform(-2, 2))
        prior = GaussianPrior(mean=mu0, var=v0)
        mean = gaussian_posterior_mean(prior, s, np.array(x_t), t)
        oracle = quadrature_posterior_mean(mu0, v0, s.alpha_bar[t], x_t)
        npt.assert_allclose(mean, oracle, rtol=1e-8)


def test_delta_prior_limit():
    s = build_linear_schedule(4, 0.1, 0.4)
    mu0 = 0.37
    prior = GaussianPrior(mean=mu0, var=1e-14)
    rng = np.random.default_rng(0)
    x_t = rng.standard_normal((3, 3))
    for t in (1, 4):
        ab = s.alpha_bar[t]
        expected = (x_t - math.sqrt(ab) * mu0) / math.sqrt(1 - ab)
        npt.assert_allclose(gaussian_predict_eps(prior, s, x_t, t), expected, rtol=1e-6)


def test_no_noise_limit():
    s = build_linear_schedule(2, 1e-8, 1e-8)
    prior = GaussianPrior(mean=0.0, var=1.0)
    x_t = np.array([0.8, -0.4])
    npt.assert_allclose(gaussian_posterior_mean(prior, s, x_t, 1), x_t, atol=1e-6)


def test_denoiser_deterministic_and_ignores_condition():
    s = build_linear_schedule(6, 0.01, 0.2)
    prior = GaussianPrior(mean=np.full((4, 4), 0.5), var=np.full((4, 4), 0.2))
    den = GaussianDenoiser(prior, s)
    x_t = np.random.default_rng(1).standard_normal((4, 4))
    a = den.predict_eps(x_t, 3)
    b = den.predict_eps(x_t, 3, condition=np.ones((4, 4)))
    npt.assert_array_equal(a, b)


def test_prior_validation():
    with pytest.raises(ParameterError):
        GaussianPrior(mean=0.0, var=0.0)
    with pytest.raises(ParameterError):
        GaussianPrior(mean=np.zeros(3), var=np.array([1.0, -1.0, 1.0]))
    with pytest.raises(ShapeError):
        GaussianPrior(mean=np.zeros(3), var=np.ones(4))


def test_two_step_ddim_chain_mean_matches_affine_recursion():
    # run the accelerated two-step chain with the exact Gaussian denoiser on
    # a batch of scalar problems; the deterministic map per step is affine in
    # x_t, so the expected output is that map applied to E[x_T] = 0
    s = build_linear_schedule(4, 0.1, 0.4)
    sub = ddim_timesteps(4, 2)
    mu0, v0 = 0.4, 0.7
    prior = GaussianPrior(mean=mu0, var=v0)

    def slope_intercept(t):
        ab = s.alpha_bar[t]
        den = ab * v0 + (1 - ab)
        return math.sqrt(ab) * v0 / den, (1 - ab) * mu0 / den

    expected = 0.0
    for i in reversed(range(len(sub))):
        t = sub.steps[i]
        t_prev = sub.steps[i - 1] if i > 0 else 0
        ab_t, ab_prev = s.alpha_bar[t], s.alpha_bar[t_prev]
        sigma = math.sqrt((1 - ab_prev) / (1 - ab_t)) * math.sqrt(1 - ab_t / ab_prev)
        k_e, b_e = slope_intercept(t)
        # x_prev = sqrt(ab') E + c (x_t - sqrt(ab_t) E)/sqrt(1-ab_t) + sigma xi
        c = math.sqrt(max(1 - ab_prev - sigma**2, 0.0))
        slope = (math.sqrt(ab_prev) - c * math.sqrt(ab_t) / math.sqrt(1 - ab_t)) * k_e
        slope += c / math.sqrt(1 - ab_t)
        intercept = (math.sqrt(ab_prev) - c * math.sqrt(ab_t) / math.sqrt(1 - ab_t)) * b_e
        expected = slope * expected + intercept

    n = 200_000
    rng = np.random.default_rng(23)
    x = rng.standard_normal(n)
    den = GaussianDenoiser(prior, s)
    for i in reversed(range(len(sub))):
        t = sub.steps[i]
        eps_hat = den.predict_eps(x, t)
        x0_hat = (x - np.sqrt(1 - s.alpha_bar[t]) * eps_hat) / np.sqrt(s.alpha_bar[t])
        x = ddim_step(s, sub, x, x0_hat, eps_hat, i, 1.0, rng.standard_normal(n))
    se = x.std(ddof=1) / math.sqrt(n)
    assert abs(x.mean() - expected) <= 3 * se
