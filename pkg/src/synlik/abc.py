"""Approximate Bayesian computation baseline.

The kernel likelihood estimator averages ``K_eps(||s_obs - s_i||)`` over M
simulated summaries. It is unbiased for the ABC likelihood for any M >= 1,
so it plugs into the same pseudo-marginal sampler as synthetic likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .core import Prior, SeedStream, SimulatorModel, as_vector, simulate_batch
from .mcmc import pm_mh_step
from .synthetic_likelihood import _cholesky, estimate_moments

__all__ = [
    "AbcKernelConfig",
    "ReferenceTable",
    "pilot_covariance",
    "summary_distances",
    "abc_kernel_estimate",
    "build_reference_table",
    "abc_rejection",
    "AbcTarget",
    "abc_mcmc_step",
]

KERNELS = ("uniform", "gaussian")
DISTANCES = ("euclidean", "mahalanobis")


@dataclass(frozen=True)
class AbcKernelConfig:
    """Kernel, bandwidth, per-proposal simulation count and distance.

    ``pilot_cov`` is required for the Mahalanobis distance.
    """

    epsilon: float = 1.0
    kernel: str = "uniform"
    M: int = 1
    distance: str = "euclidean"
    pilot_cov: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown ABC kernel {self.kernel!r}; choose from {KERNELS}")
        if self.distance not in DISTANCES:
            raise ValueError(f"unknown ABC distance {self.distance!r}; choose from {DISTANCES}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"ABC epsilon must be a positive finite number, got {self.epsilon}")
        if self.M < 1:
            raise ValueError(f"ABC needs M >= 1 simulations per proposal, got {self.M}")
        if self.distance == "mahalanobis":
            if self.pilot_cov is None:
                raise ValueError("mahalanobis distance needs a pilot covariance")
            cov = np.atleast_2d(np.asarray(self.pilot_cov, dtype=np.float64))
            object.__setattr__(self, "pilot_cov", cov)
            object.__setattr__(self, "_chol", _cholesky(cov))

    def with_epsilon(self, epsilon: float) -> AbcKernelConfig:
        return AbcKernelConfig(epsilon, self.kernel, self.M, self.distance, self.pilot_cov)


def pilot_covariance(model: SimulatorModel, theta, seeds: SeedStream, budget: int = 2000) -> np.ndarray:
    """Summary covariance at ``theta`` from ``budget`` simulations."""
    return estimate_moments(simulate_batch(model, theta, budget, seeds)).cov


def summary_distances(observed, simulated, cfg: AbcKernelConfig) -> np.ndarray:
    observed = np.asarray(observed, dtype=np.float64).reshape(-1)
    simulated = np.atleast_2d(np.asarray(simulated, dtype=np.float64))
    if simulated.shape[1] != observed.shape[0]:
        raise ValueError(
            f"simulated summaries have dimension {simulated.shape[1]}, observed has {observed.shape[0]}"
        )
    diff = simulated - observed
    if cfg.distance == "mahalanobis":
        diff = solve_triangular(cfg._chol, diff.T, lower=True, check_finite=False).T
    return np.sqrt(np.sum(diff * diff, axis=1))


def _kernel(t: np.ndarray, cfg: AbcKernelConfig) -> np.ndarray:
    if cfg.kernel == "uniform":
        return (t <= cfg.epsilon).astype(np.float64)
    return np.exp(-0.5 * (t / cfg.epsilon) ** 2)


def abc_kernel_estimate(observed, simulated, cfg: AbcKernelConfig) -> float:
    """Average unnormalised kernel weight of the simulated summaries."""
    return float(np.mean(_kernel(summary_distances(observed, simulated, cfg), cfg)))


@dataclass(frozen=True)
class ReferenceTable:
    thetas: np.ndarray
    summaries: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return self.distances.shape[0]


def build_reference_table(
    model: SimulatorModel,
    prior: Prior,
    observed,
    budget: int,
    cfg: AbcKernelConfig,
    seeds: SeedStream,
    workers: int | None = None,
) -> ReferenceTable:
    """One simulation per prior draw; prior draws use ``seeds.child(0)``, simulations ``seeds.child(1)``."""
    thetas = prior.sample(seeds.child(0), budget)
    sims = simulate_batch(model, None, budget, seeds.child(1), workers, thetas=thetas)
    return ReferenceTable(thetas, sims, summary_distances(observed, sims, cfg))


def tolerance_quantile(distances, quantile: float) -> float:
    """Smallest tolerance keeping ``ceil(quantile * len(distances))`` rows."""
    if not 0.0 < quantile <= 1.0:
        raise ValueError(f"acceptance quantile must lie in (0, 1], got {quantile}")
    keep = max(1, math.ceil(quantile * len(distances) - 1e-9))
    return float(np.sort(distances)[keep - 1])


def abc_rejection_table(
    model: SimulatorModel,
    prior: Prior,
    observed,
    budget: int,
    quantile: float,
    cfg: AbcKernelConfig,
    seeds: SeedStream,
    workers: int | None = None,
) -> tuple[ReferenceTable, float]:
    """Reference table plus the tolerance set at its ``quantile`` distance."""
    if budget < 10:
        raise ValueError(f"rejection ABC budget must be at least 10, got {budget}")
    if not 0.0 < quantile <= 1.0:
        raise ValueError(f"acceptance quantile must lie in (0, 1], got {quantile}")
    table = build_reference_table(model, prior, observed, budget, cfg, seeds, workers)
    return table, tolerance_quantile(table.distances, quantile)


def abc_rejection(
    model: SimulatorModel,
    prior: Prior,
    observed,
    budget: int,
    quantile: float,
    cfg: AbcKernelConfig,
    seeds: SeedStream,
    workers: int | None = None,
) -> tuple[np.ndarray, float]:
    """Rejection ABC with the tolerance set to a distance quantile.

    Returns the accepted parameters (all rows within the realised tolerance,
    at least ``ceil(quantile * budget)`` of them) and the realised tolerance.
    """
    table, eps = abc_rejection_table(model, prior, observed, budget, quantile, cfg, seeds, workers)
    return table.thetas[table.distances <= eps], eps


def chain_start(table: ReferenceTable, cfg: AbcKernelConfig) -> tuple[np.ndarray, float]:
    """First reference-table row with kernel mass, and its log kernel weight.

    With ``cfg.M == 1`` the row's single simulation is a valid retained
    estimate, so an ABC-MCMC chain can start there without re-simulating.
    For a uniform kernel at the table's own tolerance the start is a draw
    from the chain's stationary distribution.
    """
    if cfg.M != 1:
        raise ValueError("a reference-table row is a retained estimate only for M = 1")
    weights = _kernel(table.distances, cfg)
    hits = np.flatnonzero(weights > 0)
    if hits.size == 0:
        raise ValueError("no reference-table row has positive kernel weight")
    i = int(hits[0])
    return table.thetas[i].copy(), math.log(weights[i])


def rejection_scales(accepted) -> np.ndarray:
    """Random-walk scales ``2.38 / sqrt(d) * sd`` from rejection-ABC draws."""
    accepted = np.atleast_2d(np.asarray(accepted, dtype=np.float64))
    if accepted.shape[0] < 2:
        raise ValueError("need at least two accepted draws to size a proposal")
    sd = accepted.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise ValueError("accepted draws have zero spread in some coordinate")
    return 2.38 / math.sqrt(accepted.shape[1]) * sd


@dataclass
class AbcTarget:
    """Callable ``target(theta, seeds) -> log p_eps`` (``-inf`` when no kernel mass)."""

    model: SimulatorModel
    observed: np.ndarray
    cfg: AbcKernelConfig
    workers: int | None = None

    def __post_init__(self):
        self.observed = as_vector(self.observed, self.model.d_s, "observed summary")

    @property
    def sims_per_call(self) -> int:
        return self.cfg.M

    def __call__(self, theta, seeds: SeedStream) -> float:
        sims = simulate_batch(self.model, theta, self.cfg.M, seeds, self.workers)
        p = abc_kernel_estimate(self.observed, sims, self.cfg)
        return math.log(p) if p > 0 else -math.inf


def abc_mcmc_step(state, scales, observed, cfg: AbcKernelConfig, model: SimulatorModel, prior: Prior, seeds: SeedStream):
    """One ABC-MCMC transition; returns ``(state, accepted)``."""
    return pm_mh_step(state, AbcTarget(model, observed, cfg), prior, scales, seeds)

