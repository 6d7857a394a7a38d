"""Bayesian synthetic likelihood, robust BSL and ABC baselines for simulator models."""

from .abc import AbcKernelConfig, AbcTarget, abc_kernel_estimate, abc_mcmc_step, abc_rejection
from .core import Normal, Prior, SeedStream, SimulatorError, SimulatorModel, Uniform, prior_logpdf, prior_sample, simulate_batch
from .external import ExternalSimulator, ExternalSimulatorSpec, ProtocolError, external_simulate
from .harness import ExperimentResult, ExperimentSpec, run_experiment
from .mcmc import (
    ChainState,
    InitializationError,
    ProposalConfig,
    Trace,
    diagnostics,
    effective_sample_size,
    pm_mh_step,
    rbsl_step,
    run_chain,
    run_rbsl_chain,
)
from .models import ContaminatedNormal, GaussianMeans, GaussianToy, MovingAverage2, build_model, toy_partial_posterior
from .synthetic_likelihood import (
    BslTarget,
    MomentEstimate,
    NonPositiveDefinite,
    Shrinkage,
    Standard,
    Whitened,
    WhiteningTransform,
    adjusted_loglik,
    apply_whitening,
    estimate_moments,
    fit_whitening,
    gaussian_logpdf,
    shrink_covariance,
    synthetic_loglik,
)

__version__ = "0.1.0"
