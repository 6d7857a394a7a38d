"""Built-in simulators with analytic reference results.

All models draw their noise from per-simulation SplitMix64 streams
(:func:`synlik.core.stream_normals`), vectorised over a batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincinv, ndtri

from .core import Normal, Prior, SimulatorModel, Uniform, as_vector, stream_normals, stream_uniforms

__all__ = [
    "GaussianToy",
    "GaussianMeans",
    "MovingAverage2",
    "ContaminatedNormal",
    "toy_partial_posterior",
    "ma2_invertible",
    "ma2_summary_mean",
    "contaminated_observed",
    "MODELS",
    "build_model",
]


@dataclass
class GaussianToy(SimulatorModel):
    """n iid N(theta, sigma0^2) observations with a conjugate N(mu0, tau0^2) prior.

    With ``d_s=1`` the summary is the sample mean, drawn exactly as
    N(theta, sigma0^2 / n) from one normal per simulation. With ``d_s=2`` the
    raw data are simulated and the summary is (mean, log sample variance);
    the second coordinate is ancillary, so the partial posterior is the same.
    """

    n: int = 100
    sigma0: float = 1.0
    mu0: float = 0.0
    tau0: float = 1.0
    d_s: int = 1
    name = "gaussian_toy"
    d_theta = 1

    def __post_init__(self):
        if self.sigma0 <= 0 or self.tau0 <= 0:
            raise ValueError("gaussian_toy needs sigma0 > 0 and tau0 > 0")
        if self.d_s not in (1, 2):
            raise ValueError(f"gaussian_toy supports d_s 1 or 2, got {self.d_s}")
        if self.n < 2:
            raise ValueError("gaussian_toy needs n >= 2")

    def simulate_many(self, thetas, seeds):
        thetas = np.asarray(thetas, dtype=np.float64).reshape(-1, 1)
        if self.d_s == 1:
            z = stream_normals(seeds, 1)
            return thetas + self.sigma0 / math.sqrt(self.n) * z
        x = thetas + self.sigma0 * stream_normals(seeds, self.n)
        return np.column_stack([x.mean(axis=1), np.log(x.var(axis=1, ddof=1))])

    def default_prior(self) -> Prior:
        return Prior((Normal(self.mu0, self.tau0),))


def toy_partial_posterior(observed_mean: float, cfg: GaussianToy, flat_prior: bool = False) -> tuple[float, float]:
    """Conjugate posterior (mean, sd) of theta given the sample mean.

    ``flat_prior=True`` gives the tau0 -> infinity limit N(S, sigma0^2 / n).
    """
    lik_prec = cfg.n / cfg.sigma0**2
    if flat_prior:
        return float(observed_mean), math.sqrt(1.0 / lik_prec)
    var = 1.0 / (1.0 / cfg.tau0**2 + lik_prec)
    mean = var * (cfg.mu0 / cfg.tau0**2 + lik_prec * observed_mean)
    return mean, math.sqrt(var)


@dataclass
class GaussianMeans(SimulatorModel):
    """d_s coordinate means sharing one location parameter.

    ``summary = theta * 1 + (sigma0 / sqrt(n)) * L z`` with L the Cholesky
    factor of an equicorrelation matrix with correlation ``rho``. The summary
    covariance does not depend on theta, so whitening at any centre
    decorrelates exactly everywhere.
    """

    d_s: int = 5
    n: int = 100
    sigma0: float = 1.0
    rho: float = 0.0
    prior_sd: float = 1.0
    name = "gaussian_means"
    d_theta = 1

    def __post_init__(self):
        if self.d_s < 1:
            raise ValueError("gaussian_means needs d_s >= 1")
        if not -1.0 / max(self.d_s - 1, 1) < self.rho < 1.0:
            raise ValueError(f"rho={self.rho} does not give a positive definite equicorrelation matrix")
        corr = np.full((self.d_s, self.d_s), self.rho)
        np.fill_diagonal(corr, 1.0)
        self.cov = self.sigma0**2 / self.n * corr
        self._chol = np.linalg.cholesky(self.cov)

    def simulate_many(self, thetas, seeds):
        thetas = np.asarray(thetas, dtype=np.float64).reshape(-1, 1)
        z = stream_normals(seeds, self.d_s)
        return thetas + z @ self._chol.T

    def default_prior(self) -> Prior:
        return Prior((Normal(0.0, self.prior_sd),))


def ma2_invertible(theta) -> bool:
    t1, t2 = float(theta[0]), float(theta[1])
    return -1.0 < t2 < 1.0 and t1 + t2 > -1.0 and t2 - t1 > -1.0


def ma2_summary_mean(theta) -> np.ndarray:
    """Population autocovariances at lags 0, 1, 2 for unit innovations."""
    theta = as_vector(theta, 2, "MA(2) parameter")
    if not ma2_invertible(theta):
        raise ValueError(f"theta={theta.tolist()} is outside the MA(2) invertibility triangle")
    t1, t2 = theta
    return np.array([1 + t1 * t1 + t2 * t2, t1 + t1 * t2, t2])


@dataclass
class MovingAverage2(SimulatorModel):
    """x_t = e_t + theta1 e_{t-1} + theta2 e_{t-2}, e_t ~ N(0, 1).

    Summaries are the lag 0, 1, 2 sample autocovariances about zero with
    divisor ``n - k``, which makes them unbiased for :func:`ma2_summary_mean`.
    """

    n: int = 500
    name = "ma2"
    d_theta = 2
    d_s = 3

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("ma2 needs n >= 3")

    def simulate_many(self, thetas, seeds):
        thetas = np.asarray(thetas, dtype=np.float64).reshape(-1, 2)
        e = stream_normals(seeds, self.n + 2)
        x = e[:, 2:] + thetas[:, :1] * e[:, 1:-1] + thetas[:, 1:] * e[:, :-2]
        n = self.n
        return np.column_stack([
            np.einsum("ij,ij->i", x, x) / n,
            np.einsum("ij,ij->i", x[:, 1:], x[:, :-1]) / (n - 1),
            np.einsum("ij,ij->i", x[:, 2:], x[:, :-2]) / (n - 2),
        ])

    def default_prior(self) -> Prior:
        return Prior((Uniform(-2.0, 2.0), Uniform(-1.0, 1.0)), constraint=ma2_invertible)


@dataclass
class ContaminatedNormal(SimulatorModel):
    """Assumed model N(theta, 1); observed data come from N(theta_true, sigma_true^2).

    Summaries are the sample mean and unbiased sample variance, drawn from
    their exact joint sampling distribution rather than from raw data. For
    ``sigma_true != 1`` no theta reproduces the observed variance summary.
    """

    n: int = 100
    sigma_true: float = 2.0
    theta_true: float = 0.0
    prior_sd: float = 10.0
    name = "contaminated_normal"
    d_theta = 1
    d_s = 2

    def __post_init__(self):
        if self.sigma_true <= 0:
            raise ValueError("sigma_true must be positive")
        if self.n < 2:
            raise ValueError("contaminated_normal needs n >= 2")

    def _summaries(self, thetas, seeds, sd):
        # exact joint law of (mean, variance) for n normal draws: independent
        # N(theta, sd^2 / n) and sd^2 * chi2_{n-1} / (n - 1)
        thetas = np.asarray(thetas, dtype=np.float64).reshape(-1)
        u = stream_uniforms(seeds, 2)
        mean = thetas + sd / math.sqrt(self.n) * ndtri(u[:, 0])
        chi2 = 2.0 * gammaincinv(0.5 * (self.n - 1), u[:, 1])
        return np.column_stack([mean, sd * sd * chi2 / (self.n - 1)])

    def simulate_many(self, thetas, seeds):
        return self._summaries(thetas, seeds, 1.0)

    def observe(self, theta=None, seed: int = 0) -> np.ndarray:
        theta = self.theta_true if theta is None else theta
        return self._summaries([theta], np.array([seed], dtype=np.uint64), self.sigma_true)[0]

    def default_prior(self) -> Prior:
        return Prior((Normal(0.0, self.prior_sd),))


def contaminated_observed(cfg: ContaminatedNormal, seed: int) -> np.ndarray:
    """Observed (mean, variance) summary from the true generator at ``cfg.theta_true``."""
    return cfg.observe(cfg.theta_true, seed)


MODELS = {
    "gaussian_toy": GaussianToy,
    "gaussian_means": GaussianMeans,
    "ma2": MovingAverage2,
    "contaminated_normal": ContaminatedNormal,
}


def build_model(name: str, **options) -> SimulatorModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; built-in models are {sorted(MODELS)}") from None
    return cls(**options)
