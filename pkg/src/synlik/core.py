"""Domain types shared by every inference method.

Parameters and summaries are plain 1-D float arrays. The pieces that carry
real contracts are :class:`Prior`, :class:`SimulatorModel`,
:class:`SeedStream` and :func:`simulate_batch`.

Seeding
-------
A :class:`SeedStream` is a ``(root, path)`` pair. Its 64-bit seed is
``numpy.random.SeedSequence(root, spawn_key=path)`` reduced to one uint64
word, so a child seed depends only on its path and never on the order in
which streams are visited. The M per-simulation seeds of a batch are the
first M SplitMix64 outputs of the batch seed. Built-in simulators draw
their noise from the SplitMix64 sequence of each simulation seed, which
lets a whole batch be generated with array operations while each
simulation still has its own stream.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

__all__ = [
    "SimulatorError",
    "Uniform",
    "Normal",
    "Prior",
    "SeedStream",
    "SimulatorModel",
    "as_vector",
    "splitmix64_stream",
    "stream_uniforms",
    "stream_normals",
    "prior_logpdf",
    "prior_sample",
    "simulate_batch",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class SimulatorError(RuntimeError):
    """A simulator produced unusable output (non-finite or wrong shape).

    MCMC samplers treat this as a rejected proposal.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


def as_vector(values, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Return ``values`` as a read-only finite float64 vector of length ``dim``."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries: {arr}")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# counter-based streams


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def splitmix64_stream(seeds, count: int, offset: int = 0) -> np.ndarray:
    """Outputs ``offset .. offset+count-1`` of the SplitMix64 sequence of each seed.

    Returns a ``(len(seeds), count)`` uint64 array.
    """
    seeds = np.asarray(seeds, dtype=np.uint64).reshape(-1)
    steps = np.arange(offset + 1, offset + count + 1, dtype=np.uint64) * _GOLDEN
    with np.errstate(over="ignore"):
        return _mix64(seeds[:, None] + steps[None, :])


def stream_uniforms(seeds, count: int, offset: int = 0) -> np.ndarray:
    """Uniform(0, 1) draws, open interval, 53 bits each."""
    bits = splitmix64_stream(seeds, count, offset) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def stream_normals(seeds, count: int, offset: int = 0) -> np.ndarray:
    """Standard normal draws by inverse-CDF transform of :func:`stream_uniforms`."""
    return ndtri(stream_uniforms(seeds, count, offset))


@dataclass(frozen=True)
class SeedStream:
    """Hierarchical, order-independent seed derivation.

    ``SeedStream(root).child(3).child(0)`` always denotes the same stream,
    whatever else has been derived from ``root`` before.
    """

    root: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.root <= _MASK64:
            raise ValueError(f"root seed must be a 64-bit unsigned integer, got {self.root}")
        if any(not 0 <= i <= _MASK64 for i in self.path):
            raise ValueError(f"stream indices must be 64-bit unsigned integers: {self.path}")

    def child(self, index: int) -> SeedStream:
        return SeedStream(self.root, self.path + (int(index),))

    @cached_property
    def _sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.root, spawn_key=self.path)

    @cached_property
    def seed(self) -> int:
        """The 64-bit seed of this stream."""
        return int(self._sequence.generate_state(1, dtype=np.uint64)[0])

    def generator(self) -> np.random.Generator:
        """A fresh numpy Generator for this stream."""
        return np.random.Generator(np.random.PCG64(self._sequence))

    def spawn_seeds(self, count: int) -> np.ndarray:
        """``count`` uint64 seeds, one per simulation of a batch."""
        return splitmix64_stream([self.seed], count)[0]


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high) and self.low < self.high):
            raise ValueError(f"uniform prior needs finite low < high, got ({self.low}, {self.high})")

    def logpdf(self, x: float) -> float:
        if self.low <= x <= self.high:
            return -math.log(self.high - self.low)
        return -math.inf

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size)

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd) and self.sd > 0):
            raise ValueError(f"normal prior needs finite mean and sd > 0, got ({self.mean}, {self.sd})")

    def logpdf(self, x: float) -> float:
        z = (x - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * math.log(2 * math.pi)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size)


@dataclass(frozen=True)
class Prior:
    """Independent uniform/normal marginals, optionally truncated by ``constraint``.

    ``constraint`` is a predicate on the full parameter vector (e.g. the MA(2)
    invertibility triangle). Truncation leaves the log-density unnormalised,
    which is harmless inside Metropolis-Hastings ratios.
    """

    marginals: tuple[Uniform | Normal, ...]
    constraint: Callable[[np.ndarray], bool] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if not self.marginals:
            raise ValueError("prior needs at least one marginal")

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def mean(self) -> np.ndarray:
        return np.array([m.mean for m in self.marginals])

    def logpdf(self, theta) -> float:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.shape[0] != self.dim:
            raise ValueError(f"parameter has length {theta.shape[0]}, prior has dimension {self.dim}")
        total = 0.0
        for m, x in zip(self.marginals, theta):
            total += m.logpdf(float(x))
            if total == -math.inf:
                return -math.inf
        if self.constraint is not None and not self.constraint(theta):
            return -math.inf
        return total

    def sample(self, seed: SeedStream, size: int | None = None) -> np.ndarray:
        """Draw one vector (``size=None``) or a ``(size, dim)`` array."""
        rng = seed.generator()
        n = 1 if size is None else size
        out = np.empty((0, self.dim))
        while out.shape[0] < n:
            draw = np.column_stack([m.sample(rng, n) for m in self.marginals])
            if self.constraint is not None:
                draw = draw[[bool(self.constraint(row)) for row in draw]]
            out = np.vstack([out, draw])
        out = out[:n]
        return out[0] if size is None else out


def prior_logpdf(prior: Prior, theta) -> float:
    return prior.logpdf(theta)


def prior_sample(prior: Prior, seed: SeedStream) -> np.ndarray:
    return as_vector(prior.sample(seed), prior.dim, "prior draw")


# ---------------------------------------------------------------------------
# simulators


class SimulatorModel(ABC):
    """A simulator that maps ``(theta, seed)`` directly to a summary vector.

    Subclasses set ``name``, ``d_theta``, ``d_s`` and ``n`` and implement at
    least one of :meth:`simulate` / :meth:`simulate_many`; built-in models
    implement the vectorised one and get the scalar form for free. Identical
    ``(theta, seed)`` must give bit-identical output.
    """

    name: str = "model"
    d_theta: int
    d_s: int
    n: int

    def simulate(self, theta, seed: int) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).reshape(1, -1)
        return self.simulate_many(theta, np.array([seed], dtype=np.uint64))[0]

    def simulate_many(self, thetas: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        """Row ``i`` of the result is ``simulate(thetas[i], seeds[i])``."""
        return np.stack([self.simulate(t, int(s)) for t, s in zip(thetas, seeds)])

    @abstractmethod
    def default_prior(self) -> Prior: ...

    def observe(self, theta, seed: int) -> np.ndarray:
        """Summary of an 'observed' dataset generated at ``theta``.

        Well-specified models reuse the simulator; misspecification demos
        override this with their true data generator.
        """
        return self.simulate(theta, seed)


def _check_finite(summaries: np.ndarray, d_s: int, offset: int = 0) -> None:
    if summaries.ndim != 2 or summaries.shape[1] != d_s:
        raise SimulatorError(f"simulator returned shape {summaries.shape}, expected (*, {d_s})")
    bad = ~np.all(np.isfinite(summaries), axis=1)
    if bad.any():
        idx = int(np.argmax(bad)) + offset
        raise SimulatorError(f"simulation {idx} returned non-finite summary {summaries[idx - offset]}", index=idx)


def simulate_batch(
    model: SimulatorModel,
    theta,
    M: int,
    seeds: SeedStream,
    workers: int | None = None,
    thetas: Sequence | None = None,
) -> np.ndarray:
    """Simulate ``M`` summaries, simulation ``j`` seeded by ``seeds.spawn_seeds(M)[j]``.

    Returns an ``(M, d_s)`` array. With ``workers > 1`` the batch is split into
    contiguous chunks evaluated on a thread pool; because every simulation
    owns its seed, the result is identical to sequential evaluation.
    ``thetas`` (an ``(M, d_theta)`` array) replaces ``theta`` when each
    simulation needs its own parameter, as in rejection ABC.
    """
    if M < 1:
        raise ValueError(f"batch size must be >= 1, got {M}")
    if thetas is None:
        theta = np.asarray(theta, dtype=np.float64).reshape(1, -1)
        all_thetas = np.broadcast_to(theta, (M, theta.shape[1]))
    else:
        all_thetas = np.asarray(thetas, dtype=np.float64).reshape(M, -1)
    child = seeds.spawn_seeds(M)

    if not workers or workers <= 1 or M == 1:
        out = np.asarray(model.simulate_many(all_thetas, child), dtype=np.float64)
        _check_finite(out, model.d_s)
        return out

    bounds = np.linspace(0, M, min(workers, M) + 1).astype(int)

    def run(k):
        lo, hi = bounds[k], bounds[k + 1]
        part = np.asarray(model.simulate_many(all_thetas[lo:hi], child[lo:hi]), dtype=np.float64)
        _check_finite(part, model.d_s, offset=lo)
        return part

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run, range(len(bounds) - 1)))
    return np.vstack(parts)
