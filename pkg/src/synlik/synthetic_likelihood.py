"""Gaussian synthetic likelihood estimators.

The noisy log synthetic likelihood at ``theta`` is obtained by simulating M
summaries, estimating their mean and covariance, and evaluating the
Gaussian log-density of the observed summary. Three estimator variants are
supported: the plain sample covariance, Warton shrinkage of the sample
correlation toward the identity, and whitening at a fixed parameter value
followed by optional shrinkage. :func:`adjusted_loglik` evaluates the
mean-shifted density used by robust BSL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .core import SeedStream, SimulatorModel, as_vector, simulate_batch

__all__ = [
    "NonPositiveDefinite",
    "MomentEstimate",
    "Standard",
    "Shrinkage",
    "Whitened",
    "WhiteningTransform",
    "estimate_moments",
    "gaussian_logpdf",
    "shrink_covariance",
    "whitening_from_covariance",
    "fit_whitening",
    "apply_whitening",
    "simulate_moments",
    "synthetic_loglik",
    "adjusted_loglik",
    "BslTarget",
]

_LOG_2PI = math.log(2 * math.pi)
JITTER = 1e-10


class NonPositiveDefinite(ArithmeticError):
    """Covariance could not be factorised even after jitter; callers reject."""


@dataclass(frozen=True)
class MomentEstimate:
    mean: np.ndarray
    cov: np.ndarray
    M: int

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def estimate_moments(summaries) -> MomentEstimate:
    """Sample mean and unbiased (M - 1 denominator) sample covariance.

    Parameters
    ----------
    summaries : array_like, shape (M, d_s)
        One simulated summary per row, M >= 2.
    """
    x = np.asarray(summaries, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"summaries must be a 2-D (M, d_s) array, got shape {x.shape}")
    M = x.shape[0]
    if M < 2:
        raise ValueError(f"need at least 2 summaries to estimate a covariance, got {M}")
    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / (M - 1)
    cov = 0.5 * (cov + cov.T)
    return MomentEstimate(mean, cov, M)


def _cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; one retry with jitter 1e-10 * mean(diag)."""
    if not np.all(np.isfinite(cov)):
        raise NonPositiveDefinite("covariance has non-finite entries")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER * float(np.mean(np.diag(cov)))
    if jitter > 0:
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            pass
    raise NonPositiveDefinite("covariance is not positive definite after jitter")


def _logpdf(s: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    L = _cholesky(cov)
    d = s.shape[0]
    z = solve_triangular(L, s - mean, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (d * _LOG_2PI + logdet + z @ z))


def gaussian_logpdf(s, est: MomentEstimate) -> float:
    """log N(s; est.mean, est.cov) through a Cholesky factorisation.

    Raises :class:`NonPositiveDefinite` when the covariance cannot be
    factorised.
    """
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if s.shape[0] != est.mean.shape[0]:
        raise ValueError(f"summary has length {s.shape[0]}, moments have dimension {est.mean.shape[0]}")
    return _logpdf(s, est.mean, est.cov)


def shrink_covariance(cov, gamma: float) -> np.ndarray:
    """Warton shrinkage ``D^1/2 (gamma R + (1 - gamma) I) D^1/2``.

    ``D`` is diag(cov) and ``R`` the implied correlation matrix. Algebraically
    this is ``gamma * cov`` off the diagonal with the diagonal kept, which is
    how it is computed so the diagonal is preserved bit-for-bit.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"shrinkage gamma must lie in [0, 1], got {gamma}")
    cov = np.asarray(cov, dtype=np.float64)
    diag = np.diag(cov).copy()
    if np.any(diag <= 0):
        raise ValueError(f"shrinkage needs strictly positive variances, got diagonal {diag}")
    if gamma == 1.0:
        return cov.copy()
    out = gamma * cov
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, diag)
    return out


# ---------------------------------------------------------------------------
# whitening


@dataclass(frozen=True)
class WhiteningTransform:
    """``W = L^-1`` for the Cholesky factor of the summary covariance at ``center``."""

    matrix: np.ndarray
    center: np.ndarray | None = None
    M0: int | None = None
    log_abs_det: float = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        sign, logdet = np.linalg.slogdet(m)
        if sign == 0:
            raise ValueError("whitening matrix is singular")
        object.__setattr__(self, "log_abs_det", float(logdet))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def whitening_from_covariance(cov, center=None, M0=None, tol: float = 1e-8) -> WhiteningTransform:
    cov = np.asarray(cov, dtype=np.float64)
    try:
        L = _cholesky(cov)
    except NonPositiveDefinite as exc:
        raise NonPositiveDefinite(
            f"summary covariance at the whitening centre is not positive definite; increase M0 ({exc})"
        ) from None
    d = cov.shape[0]
    W = solve_triangular(L, np.eye(d), lower=True)
    err = np.max(np.abs(W @ cov @ W.T - np.eye(d)))
    if err > tol:
        raise NonPositiveDefinite(
            f"whitening check failed (max |W S W' - I| = {err:.3g}); covariance badly conditioned, increase M0"
        )
    return WhiteningTransform(W, center, M0)


def fit_whitening(
    model: SimulatorModel, theta0, M0: int, seeds: SeedStream, workers: int | None = None
) -> WhiteningTransform:
    """Estimate the summary covariance at ``theta0`` from ``M0`` simulations and invert its factor."""
    if M0 < model.d_s + 2:
        raise ValueError(f"M0 must be at least d_s + 2 = {model.d_s + 2}, got {M0}")
    theta0 = as_vector(theta0, model.d_theta, "whitening centre")
    est = estimate_moments(simulate_batch(model, theta0, M0, seeds, workers))
    return whitening_from_covariance(est.cov, theta0, M0)


def apply_whitening(w: WhiteningTransform, s) -> np.ndarray:
    """``W @ s`` for one summary, or row-wise for an (M, d_s) array."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != w.dim:
        raise ValueError(f"summary has length {s.shape[-1]}, whitening matrix is {w.dim}x{w.dim}")
    return s @ w.matrix.T


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class Standard:
    pass


@dataclass(frozen=True)
class Shrinkage:
    gamma: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"shrinkage gamma must lie in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class Whitened:
    transform: WhiteningTransform
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"shrinkage gamma must lie in [0, 1], got {self.gamma}")


Estimator = Standard | Shrinkage | Whitened


def _min_batch(estimator, d_s: int) -> int:
    if isinstance(estimator, Whitened) and estimator.gamma == 0.0:
        return 3
    if isinstance(estimator, Shrinkage) and estimator.gamma < 1.0:
        return 3
    return d_s + 2


def simulate_moments(
    model: SimulatorModel,
    theta,
    observed,
    M: int,
    estimator: Estimator,
    seeds: SeedStream,
    workers: int | None = None,
) -> tuple[MomentEstimate, np.ndarray, float]:
    """Simulate a fresh batch and return ``(moments, observed, log|det W|)``.

    Under whitening both the moments and the returned observed summary are
    in whitened coordinates; the log-determinant converts a whitened density
    back to the original summary scale.
    """
    floor = _min_batch(estimator, model.d_s)
    if M < floor:
        raise ValueError(f"batch size M={M} too small for this estimator (need >= {floor})")
    sims = simulate_batch(model, theta, M, seeds, workers)
    obs = np.asarray(observed, dtype=np.float64).reshape(-1)
    logdet = 0.0
    if isinstance(estimator, Whitened):
        sims = apply_whitening(estimator.transform, sims)
        obs = apply_whitening(estimator.transform, obs)
        logdet = estimator.transform.log_abs_det
    est = estimate_moments(sims)
    gamma = getattr(estimator, "gamma", 1.0)
    if gamma < 1.0:
        diag = np.diag(est.cov)
        if np.any(diag <= 0):
            raise NonPositiveDefinite("zero simulated variance; cannot shrink")
        est = MomentEstimate(est.mean, shrink_covariance(est.cov, gamma), est.M)
    return est, obs, logdet


def synthetic_loglik(
    model: SimulatorModel,
    theta,
    observed,
    M: int,
    estimator: Estimator = Standard(),
    seeds: SeedStream | None = None,
    workers: int | None = None,
) -> float:
    """Noisy log synthetic likelihood from a fresh batch of ``M`` simulations.

    Under whitening the result includes ``log|det W|``, so every variant is
    a density for the observed summary on its original scale.
    """
    if seeds is None:
        raise ValueError("synthetic_loglik needs an explicit SeedStream")
    est, obs, logdet = simulate_moments(model, theta, observed, M, estimator, seeds, workers)
    return gaussian_logpdf(obs, est) + logdet


def adjusted_loglik(est: MomentEstimate, observed, gamma_adj) -> float:
    """log N(observed; mean + sd * gamma_adj, cov), the robust-BSL mean shift."""
    gamma_adj = np.asarray(gamma_adj, dtype=np.float64).reshape(-1)
    if gamma_adj.shape[0] != est.mean.shape[0]:
        raise ValueError(f"adjustment has length {gamma_adj.shape[0]}, expected {est.mean.shape[0]}")
    if not np.all(np.isfinite(gamma_adj)):
        raise ValueError("adjustment vector has non-finite entries")
    if not np.any(gamma_adj):
        return gaussian_logpdf(observed, est)
    s = np.asarray(observed, dtype=np.float64).reshape(-1)
    return _logpdf(s, est.mean + est.sd * gamma_adj, est.cov)


@dataclass
class BslTarget:
    """Callable ``target(theta, seeds) -> noisy log synthetic likelihood``."""

    model: SimulatorModel
    observed: np.ndarray
    M: int
    estimator: Estimator = field(default_factory=Standard)
    workers: int | None = None

    def __post_init__(self):
        self.observed = as_vector(self.observed, self.model.d_s, "observed summary")
        floor = _min_batch(self.estimator, self.model.d_s)
        if self.M < floor:
            raise ValueError(f"batch size M={self.M} too small for this estimator (need >= {floor})")

    @property
    def sims_per_call(self) -> int:
        return self.M

    def __call__(self, theta, seeds: SeedStream) -> float:
        return synthetic_loglik(self.model, theta, self.observed, self.M, self.estimator, seeds, self.workers)
