"""Pseudo-marginal random-walk Metropolis-Hastings and chain diagnostics.

A *target* is any callable ``target(theta, seeds) -> float`` returning a
(possibly noisy) log-likelihood estimate, e.g.
:class:`~synlik.synthetic_likelihood.BslTarget` or
:class:`~synlik.abc.AbcTarget`. The estimate at the current state is kept
and never recomputed; a fresh estimate is drawn only at proposals.

Random numbers for transition ``t`` come from ``seeds.child(2).child(t)``,
so a chain is a pure function of its configuration and root seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Prior, SeedStream, SimulatorError, SimulatorModel, as_vector
from .synthetic_likelihood import (
    MomentEstimate,
    NonPositiveDefinite,
    Standard,
    adjusted_loglik,
    simulate_moments,
)

__all__ = [
    "InitializationError",
    "ChainState",
    "ProposalConfig",
    "Trace",
    "Diagnostics",
    "pm_mh_step",
    "run_chain",
    "laplace_logpdf",
    "rbsl_step",
    "run_rbsl_chain",
    "autocorrelation",
    "effective_sample_size",
    "diagnostics",
]

ADAPT_DECAY = 0.6
GAMMA_TARGET_ACCEPT = 0.44
MAX_INIT_ATTEMPTS = 10

Target = Callable[[np.ndarray, SeedStream], float]


class InitializationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainState:
    theta: np.ndarray
    loglik: float
    logprior: float
    gamma: np.ndarray | None = None
    moments: MomentEstimate | None = None
    observed: np.ndarray | None = None
    logdet: float = 0.0


@dataclass(frozen=True)
class ProposalConfig:
    """Gaussian random walk with optional diminishing Robbins-Monro scale tuning.

    During burn-in the log of a common scale factor moves by
    ``adapt_rate / (t + 1)**0.6 * (accepted - target_accept)``; it is frozen
    afterwards.
    """

    scales: tuple[float, ...]
    adaptation: str = "diminishing"
    target_accept: float = 0.234
    adapt_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in np.atleast_1d(self.scales)))
        if any(not (s > 0 and math.isfinite(s)) for s in self.scales):
            raise ValueError(f"proposal scales must be positive, got {self.scales}")
        if self.adaptation not in ("off", "diminishing"):
            raise ValueError(f"adaptation must be 'off' or 'diminishing', got {self.adaptation!r}")
        if not 0 < self.target_accept < 1:
            raise ValueError(f"target_accept must lie in (0, 1), got {self.target_accept}")


def _adapt(log_factor: float, t: int, accepted: float, target: float, rate: float) -> float:
    return log_factor + rate / (t + 1) ** ADAPT_DECAY * (accepted - target)


@dataclass
class Trace:
    """Retained (post burn-in) samples of one chain."""

    theta: np.ndarray
    loglik: np.ndarray
    accepted: np.ndarray
    burn_in: int
    seed: int
    gamma: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    final_scales: np.ndarray | None = None
    simulations: int = 0

    def __len__(self) -> int:
        return self.loglik.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self) else float("nan")

    def header(self) -> list[str]:
        cols = ["iter", "accepted", "loglik"] + [f"theta_{i + 1}" for i in range(self.theta.shape[1])]
        if self.gamma is not None:
            cols += [f"gamma_{i + 1}" for i in range(self.gamma.shape[1])]
        return cols

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for i in range(len(self)):
                row = [self.burn_in + i, int(self.accepted[i]), repr(float(self.loglik[i]))]
                row += [repr(float(v)) for v in self.theta[i]]
                if self.gamma is not None:
                    row += [repr(float(v)) for v in self.gamma[i]]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> Trace:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty trace file")
        header, body = rows[0], rows[1:]
        if header[:3] != ["iter", "accepted", "loglik"]:
            raise ValueError(f"{path}: not a trace CSV (header {header[:3]})")
        th = [i for i, h in enumerate(header) if h.startswith("theta_")]
        gm = [i for i, h in enumerate(header) if h.startswith("gamma_")]
        data = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))
        burn_in = int(data[0, 0]) if len(body) else 0
        return cls(
            theta=data[:, th],
            loglik=data[:, 2],
            accepted=data[:, 1].astype(bool),
            burn_in=burn_in,
            seed=0,
            gamma=data[:, gm] if gm else None,
        )


# ---------------------------------------------------------------------------
# transitions


def _evaluate(target: Target, theta: np.ndarray, seeds: SeedStream) -> float:
    try:
        value = float(target(theta, seeds))
    except (NonPositiveDefinite, SimulatorError):
        return -math.inf
    return value if not math.isnan(value) else -math.inf


def pm_mh_step(
    state: ChainState, target: Target, prior: Prior, scales, seeds: SeedStream
) -> tuple[ChainState, bool]:
    """One pseudo-marginal MH transition with a symmetric Gaussian proposal.

    Proposals outside the prior support are rejected before any simulation.
    Returns the next state and whether the proposal was accepted.
    """
    rng = seeds.child(0).generator()
    scales = np.asarray(scales, dtype=np.float64)
    proposal = state.theta + scales * rng.standard_normal(state.theta.shape[0])
    log_u = math.log(rng.random())
    lp = prior.logpdf(proposal)
    if lp == -math.inf:
        return state, False
    ll = _evaluate(target, proposal, seeds.child(1))
    if ll == -math.inf:
        return state, False
    if log_u < ll + lp - state.loglik - state.logprior:
        proposal.setflags(write=False)
        return ChainState(proposal, ll, lp), True
    return state, False


def _initial_points(init, prior: Prior, seeds: SeedStream):
    yield np.asarray(prior.mean if init is None else init, dtype=np.float64).reshape(-1)
    for a in range(1, MAX_INIT_ATTEMPTS):
        yield prior.sample(seeds.child(a))


def _initialise(init, prior: Prior, seeds: SeedStream, evaluate, label: str):
    tried = []
    for a, theta in enumerate(_initial_points(init, prior, seeds.child(0))):
        tried.append(theta.tolist())
        lp = prior.logpdf(theta)
        if lp == -math.inf:
            continue
        result = evaluate(theta, seeds.child(1).child(a))
        if result is not None:
            return theta, lp, result
    raise InitializationError(
        f"{label}: no valid starting point after {MAX_INIT_ATTEMPTS} attempts; tried theta = {tried}"
    )


def run_chain(
    init,
    iterations: int,
    burn_in: int,
    target: Target,
    prior: Prior,
    proposal: ProposalConfig,
    seeds: SeedStream,
    label: str = "model",
    init_loglik: float | None = None,
) -> Trace:
    """Run ``burn_in + iterations`` transitions and keep the last ``iterations``.

    The first starting point is ``init`` (prior mean when ``None``); up to
    nine prior draws are tried if its likelihood estimate is unusable.
    ``init_loglik`` supplies an already computed estimate at ``init``, which
    is then retained instead of evaluated.
    """
    if iterations < 0 or burn_in < 0:
        raise ValueError("iterations and burn_in must be non-negative")
    if len(proposal.scales) != prior.dim:
        raise ValueError(f"{len(proposal.scales)} proposal scales for {prior.dim} parameters")

    calls = 0

    def counted(theta, s):
        nonlocal calls
        calls += 1
        return target(theta, s)

    def evaluate(theta, s):
        ll = _evaluate(counted, theta, s)
        return ll if ll > -math.inf else None

    if init_loglik is not None:
        if init is None or not math.isfinite(init_loglik):
            raise ValueError("init_loglik needs an explicit init and a finite value")
        theta = np.array(init, dtype=np.float64).reshape(-1)
        lp, ll = prior.logpdf(theta), float(init_loglik)
        if lp == -math.inf:
            raise InitializationError(f"{label}: supplied start {theta.tolist()} is outside the prior support")
    else:
        theta, lp, ll = _initialise(init, prior, seeds, evaluate, label)
    theta.setflags(write=False)
    state = ChainState(theta, ll, lp)

    base = np.array(proposal.scales)
    log_factor = 0.0
    d = prior.dim
    thetas = np.empty((iterations, d))
    logliks = np.empty(iterations)
    flags = np.zeros(iterations, dtype=bool)
    step_seeds = seeds.child(2)
    for t in range(burn_in + iterations):
        state, accepted = pm_mh_step(state, counted, prior, base * math.exp(log_factor), step_seeds.child(t))
        if t < burn_in and proposal.adaptation == "diminishing":
            log_factor = _adapt(log_factor, t, float(accepted), proposal.target_accept, proposal.adapt_rate)
        k = t - burn_in
        if k >= 0:
            thetas[k] = state.theta
            logliks[k] = state.loglik
            flags[k] = accepted
    return Trace(
        theta=thetas,
        loglik=logliks,
        accepted=flags,
        burn_in=burn_in,
        seed=seeds.root,
        final_scales=base * math.exp(log_factor),
        simulations=calls * int(getattr(target, "sims_per_call", 0)),
    )


# ---------------------------------------------------------------------------
# robust BSL


def laplace_logpdf(x, scale: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(-np.abs(x) / scale - math.log(2 * scale)))


def rbsl_step(
    state: ChainState,
    model: SimulatorModel,
    observed,
    M: int,
    lam: float,
    prior: Prior,
    scales,
    gamma_scales,
    seeds: SeedStream,
    estimator=Standard(),
    workers: int | None = None,
) -> tuple[ChainState, bool, np.ndarray]:
    """One robust-BSL sweep: a pseudo-marginal theta move, then one MH move per adjustment.

    The theta move simulates a fresh batch at the proposal and scores it with
    the mean-adjusted likelihood at the current adjustment. The adjustment
    moves reuse the retained moments, so they cost no simulations.
    Returns ``(state, theta_accepted, adjustment_accepted)``.
    """
    rng = seeds.child(0).generator()
    d_theta = state.theta.shape[0]
    d_s = state.gamma.shape[0]
    proposal = state.theta + np.asarray(scales) * rng.standard_normal(d_theta)
    log_u = math.log(rng.random())
    z_gamma = rng.standard_normal(d_s)
    log_u_gamma = np.log(rng.random(d_s))

    theta_accepted = False
    lp = prior.logpdf(proposal)
    if lp > -math.inf:
        try:
            est, obs, logdet = simulate_moments(model, proposal, observed, M, estimator, seeds.child(1), workers)
            ll = adjusted_loglik(est, obs, state.gamma) + logdet
        except (NonPositiveDefinite, SimulatorError):
            ll = -math.inf
        if ll > -math.inf and log_u < ll + lp - state.loglik - state.logprior:
            proposal.setflags(write=False)
            state = ChainState(proposal, ll, lp, state.gamma, est, obs, logdet)
            theta_accepted = True

    gamma = state.gamma.copy()
    loglik = state.loglik
    logdet = state.logdet
    gamma_accepted = np.zeros(d_s, dtype=bool)
    gs = np.asarray(gamma_scales, dtype=np.float64)
    for k in range(d_s):
        old = gamma[k]
        gamma[k] = old + gs[k] * z_gamma[k]
        try:
            ll = adjusted_loglik(state.moments, state.observed, gamma) + logdet
        except NonPositiveDefinite:
            ll = -math.inf
        log_ratio = ll - loglik + (abs(old) - abs(gamma[k])) / lam
        if log_u_gamma[k] < log_ratio:
            loglik = ll
            gamma_accepted[k] = True
        else:
            gamma[k] = old
    if gamma_accepted.any():
        gamma.setflags(write=False)
        state = ChainState(state.theta, loglik, state.logprior, gamma, state.moments, state.observed, logdet)
    return state, theta_accepted, gamma_accepted


def run_rbsl_chain(
    init,
    iterations: int,
    burn_in: int,
    model: SimulatorModel,
    observed,
    M: int,
    lam: float,
    prior: Prior,
    proposal: ProposalConfig,
    seeds: SeedStream,
    estimator=Standard(),
    gamma_scale: float = 0.5,
    workers: int | None = None,
    gamma_init: str = "match",
) -> Trace:
    """Robust BSL over ``(theta, Gamma)`` with Laplace(0, ``lam``) priors on each adjustment.

    With ``gamma_init="match"`` the adjustments start at
    ``(observed - mean) / sd`` of the initial batch, where the adjusted mean
    reproduces the observed summary exactly; ``"zero"`` starts them at 0.
    Their random-walk scales adapt component-wise toward a 0.44 acceptance
    rate during burn-in.
    """
    if gamma_init not in ("match", "zero"):
        raise ValueError(f"gamma_init must be 'match' or 'zero', got {gamma_init!r}")
    if lam <= 0:
        raise ValueError(f"Laplace scale lambda must be positive, got {lam}")
    observed = as_vector(observed, model.d_s, "observed summary")
    d_s = model.d_s
    zero = np.zeros(d_s)
    zero.setflags(write=False)

    def evaluate(theta, s):
        try:
            est, obs, logdet = simulate_moments(model, theta, observed, M, estimator, s, workers)
            adjusted_loglik(est, obs, zero)
            return est, obs, logdet
        except (NonPositiveDefinite, SimulatorError):
            return None

    theta, lp, (est, obs, logdet) = _initialise(init, prior, seeds, evaluate, model.name)
    theta.setflags(write=False)
    gamma0 = (obs - est.mean) / est.sd if gamma_init == "match" else zero.copy()
    gamma0.setflags(write=False)
    state = ChainState(theta, adjusted_loglik(est, obs, gamma0) + logdet, lp, gamma0, est, obs, logdet)

    base = np.array(proposal.scales)
    log_factor = 0.0
    log_gamma = np.full(d_s, math.log(gamma_scale))
    adapt = proposal.adaptation == "diminishing"
    thetas = np.empty((iterations, prior.dim))
    gammas = np.empty((iterations, d_s))
    logliks = np.empty(iterations)
    flags = np.zeros(iterations, dtype=bool)
    step_seeds = seeds.child(2)
    for t in range(burn_in + iterations):
        state, acc, gacc = rbsl_step(
            state, model, observed, M, lam, prior, base * math.exp(log_factor), np.exp(log_gamma),
            step_seeds.child(t), estimator, workers,
        )
        if t < burn_in and adapt:
            log_factor = _adapt(log_factor, t, float(acc), proposal.target_accept, proposal.adapt_rate)
            log_gamma = _adapt(log_gamma, t, gacc.astype(float), GAMMA_TARGET_ACCEPT, proposal.adapt_rate)
        k = t - burn_in
        if k >= 0:
            thetas[k] = state.theta
            gammas[k] = state.gamma
            logliks[k] = state.loglik
            flags[k] = acc
    return Trace(
        theta=thetas,
        loglik=logliks,
        accepted=flags,
        burn_in=burn_in,
        seed=seeds.root,
        gamma=gammas,
        final_scales=base * math.exp(log_factor),
    )


# ---------------------------------------------------------------------------
# diagnostics


def autocorrelation(x) -> np.ndarray:
    """Lag-k autocorrelations with the ``1/(n-k)`` autocovariance normalisation, via FFT."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    c = x - x.mean()
    f = np.fft.rfft(c, 2 * n)
    acov = np.fft.irfft(f * np.conj(f), 2 * n)[:n] / np.arange(n, 0, -1)
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x) -> tuple[float, int]:
    """Geyer initial-positive-sequence ESS and the number of lag pairs summed.

    Constant chains get ESS 1. The autocorrelation time is floored at
    ``1 / log10(n)`` so antithetic chains cannot report unbounded ESS.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2 or np.ptp(x) == 0:
        return 1.0, 0
    rho = autocorrelation(x)
    m = n // 2
    pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m : 2]
    nonpos = np.flatnonzero(pairs <= 0)
    k = int(nonpos[0]) if nonpos.size else m
    tau = -1.0 + 2.0 * float(np.sum(pairs[:k]))
    tau = max(tau, 1.0 / math.log10(max(n, 10)))
    return max(1.0, n / tau), k


@dataclass
class Diagnostics:
    acceptance_rate: float
    ess: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    quantiles: np.ndarray  # rows: 2.5%, 50%, 97.5%
    mcse: np.ndarray
    truncation: list[int]
    gamma: Diagnostics | None = None

    def to_dict(self) -> dict:
        out = {
            "acceptance_rate": self.acceptance_rate,
            "ess": self.ess.tolist(),
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "q025": self.quantiles[0].tolist(),
            "q500": self.quantiles[1].tolist(),
            "q975": self.quantiles[2].tolist(),
            "mcse": self.mcse.tolist(),
        }
        if self.gamma is not None:
            out["gamma"] = self.gamma.to_dict()
        return out


def _summarise(samples: np.ndarray, acceptance: float) -> Diagnostics:
    res = [effective_sample_size(col) for col in samples.T]
    ess = np.array([r[0] for r in res])
    sd = samples.std(axis=0, ddof=1) if samples.shape[0] > 1 else np.zeros(samples.shape[1])
    return Diagnostics(
        acceptance_rate=acceptance,
        ess=ess,
        mean=samples.mean(axis=0),
        sd=sd,
        quantiles=np.quantile(samples, [0.025, 0.5, 0.975], axis=0),
        mcse=sd / np.sqrt(ess),
        truncation=[r[1] for r in res],
    )


def diagnostics(trace: Trace) -> Diagnostics:
    if len(trace) == 0:
        raise ValueError("cannot compute diagnostics for an empty trace")
    out = _summarise(trace.theta, trace.acceptance_rate)
    if trace.gamma is not None:
        out.gamma = _summarise(trace.gamma, trace.acceptance_rate)
    return out
