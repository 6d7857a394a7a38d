import math

import numpy as np
import pytest

from synlik.core import SeedStream, simulate_batch
from synlik.models import (
    MODELS,
    ContaminatedNormal,
    GaussianMeans,
    GaussianToy,
    MovingAverage2,
    build_model,
    contaminated_observed,
    ma2_invertible,
    ma2_summary_mean,
    toy_partial_posterior,
)


def test_toy_posterior_formula():
    mean, sd = toy_partial_posterior(0.3, GaussianToy(n=100, sigma0=1.0, mu0=0.0, tau0=1.0))
    assert sd**2 == pytest.approx(1 / 101, rel=1e-14)
    assert mean == pytest.approx(30 / 101, rel=1e-14)


def test_toy_posterior_flat_limit_and_symmetry():
    cfg = GaussianToy(n=50, sigma0=2.0, mu0=1.5, tau0=3.0)
    mean, sd = toy_partial_posterior(0.7, cfg, flat_prior=True)
    assert mean == 0.7 and sd == pytest.approx(2.0 / math.sqrt(50))
    big = GaussianToy(n=50, sigma0=2.0, tau0=1e8)
    m_big, sd_big = toy_partial_posterior(0.7, big)
    assert m_big == pytest.approx(0.7, rel=1e-9) and sd_big == pytest.approx(sd, rel=1e-9)
    for n in (2, 10, 1000):
        assert toy_partial_posterior(1.5, GaussianToy(n=n, mu0=1.5))[0] == pytest.approx(1.5, rel=1e-14)


def test_toy_summary_law():
    model = GaussianToy(n=100, sigma0=2.0)
    x = simulate_batch(model, [0.5], 20_000, SeedStream(0))[:, 0]
    assert abs(x.mean() - 0.5) < 3 * 0.2 / math.sqrt(20_000)
    assert x.var(ddof=1) == pytest.approx(0.04, rel=0.05)


def test_toy_two_summaries():
    model = GaussianToy(n=100, d_s=2)
    x = simulate_batch(model, [1.0], 4000, SeedStream(1))
    assert x.shape == (4000, 2)
    assert abs(x[:, 0].mean() - 1.0) < 0.01
    # log sample variance of 100 unit normals centres near 0
    assert abs(x[:, 1].mean()) < 0.02
    assert abs(np.corrcoef(x.T)[0, 1]) < 0.05


@pytest.mark.parametrize("kwargs", [{"sigma0": 0.0}, {"tau0": -1.0}, {"d_s": 3}, {"n": 1}])
def test_toy_validation(kwargs):
    with pytest.raises(ValueError):
        GaussianToy(**kwargs)


def test_ma2_formula():
    np.testing.assert_allclose(ma2_summary_mean([0.0, 0.0]), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(ma2_summary_mean([0.6, 0.2]), [1.4, 0.72, 0.2], rtol=1e-14)
    with pytest.raises(ValueError, match="triangle"):
        ma2_summary_mean([0.0, 1.2])


def test_ma2_triangle():
    assert ma2_invertible([0.6, 0.2])
    assert not ma2_invertible([0.0, 1.0])
    assert not ma2_invertible([-1.5, 0.4])
    assert not ma2_invertible([1.5, 0.4])
    prior = MovingAverage2().default_prior()
    assert prior.logpdf([1.5, 0.4]) == -math.inf
    draws = prior.sample(SeedStream(0), 1000)
    assert all(ma2_invertible(t) for t in draws)


def test_ma2_batch_mean_clt():
    model = MovingAverage2(n=500)
    x = simulate_batch(model, [0.6, 0.2], 10_000, SeedStream(2))
    se = x.std(axis=0, ddof=1) / math.sqrt(len(x))
    assert np.all(np.abs(x.mean(axis=0) - ma2_summary_mean([0.6, 0.2])) < 3 * se)


def test_contaminated_observed():
    wide = ContaminatedNormal(n=10_000, sigma_true=2.0, theta_true=0.0)
    obs = contaminated_observed(wide, 3)
    assert abs(obs[0]) < 0.1
    assert obs[1] == pytest.approx(4.0, rel=0.05)
    sims = simulate_batch(wide, [0.0], 200, SeedStream(4))
    assert np.all(np.abs(sims[:, 1] - 1.0) < 0.1)
    control = ContaminatedNormal(n=10_000, sigma_true=1.0)
    assert contaminated_observed(control, 3)[1] == pytest.approx(1.0, rel=0.05)


def test_contaminated_summary_law():
    model = ContaminatedNormal(n=20, sigma_true=1.0)
    x = simulate_batch(model, [1.0], 40_000, SeedStream(5))
    assert abs(x[:, 0].mean() - 1.0) < 3 * math.sqrt(1 / 20 / 40_000)
    assert abs(x[:, 1].mean() - 1.0) < 3 * math.sqrt(2 / 19 / 40_000)
    assert x[:, 1].var(ddof=1) == pytest.approx(2 / 19, rel=0.05)
    with pytest.raises(ValueError):
        ContaminatedNormal(sigma_true=0.0)


def test_gaussian_means_covariance():
    model = GaussianMeans(d_s=4, rho=0.5, n=25)
    x = simulate_batch(model, [0.0], 20_000, SeedStream(6))
    np.testing.assert_allclose(np.cov(x.T), model.cov, atol=0.003)
    with pytest.raises(ValueError, match="positive definite"):
        GaussianMeans(d_s=4, rho=-0.5)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_models_deterministic(name):
    model = build_model(name)
    theta = model.default_prior().mean
    a = model.simulate(theta, 12345)
    b = model.simulate(theta, 12345)
    assert np.array_equal(a, b) and a.shape == (model.d_s,)
    assert not np.array_equal(a, model.simulate(theta, 12346))


def test_build_model_unknown():
    with pytest.raises(ValueError, match="unknown model"):
        build_model("ricker")
