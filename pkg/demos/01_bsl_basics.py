"""
Bayesian synthetic likelihood on a conjugate toy
================================================

The Gaussian toy model has an exactly Gaussian summary (the sample mean),
so the synthetic likelihood is exact and the BSL posterior must agree with
the conjugate posterior up to Monte Carlo error.
"""

import math

import numpy as np

from synlik import BslTarget, GaussianToy, ProposalConfig, SeedStream, diagnostics, run_chain, toy_partial_posterior

# n = 100 observations with known unit noise and a N(0, 1) prior
model = GaussianToy(n=100)
prior = model.default_prior()

# an observed summary simulated at theta = 0.3
observed = model.observe([0.3], seed=2024)
print("observed sample mean:", observed)

# the exact answer
mean, sd = toy_partial_posterior(float(observed[0]), model)
print(f"conjugate posterior: mean {mean:.4f}, sd {sd:.4f}")

# every likelihood evaluation simulates a fresh batch of M summaries
target = BslTarget(model, observed, M=50)
trace = run_chain(None, 20_000, 2000, target, prior, ProposalConfig((0.15,)), SeedStream(1))
d = diagnostics(trace)
print(f"BSL posterior:       mean {d.mean[0]:.4f} +/- {d.mcse[0]:.4f}, sd {d.sd[0]:.4f}")
print(f"acceptance {d.acceptance_rate:.2f}, ESS {d.ess[0]:.0f}, simulations {trace.simulations}")

# the discrepancy in units of Monte Carlo standard error
print(f"|mean error| = {abs(d.mean[0] - mean) / d.mcse[0]:.2f} MC-SE")

# a larger M makes the likelihood estimate less noisy but not more accurate
for M in (10, 100):
    t = run_chain(None, 5000, 1000, BslTarget(model, observed, M), prior, ProposalConfig((0.15,)), SeedStream(2))
    dd = diagnostics(t)
    print(f"M={M:4d}: sd {dd.sd[0]:.4f}, acceptance {dd.acceptance_rate:.2f}, ESS per 1000 sims {1000 * dd.ess[0] / t.simulations:.2f}")

# the per-step loglik noise that drives those acceptance rates
for M in (10, 100):
    vals = [BslTarget(model, observed, M)([0.3], SeedStream(3).child(i)) for i in range(200)]
    print(f"M={M:4d}: sd of the log synthetic likelihood at theta=0.3 is {np.std(vals):.3f}")
print("exact log-likelihood at theta=0.3:", -0.5 * math.log(2 * math.pi / 100) - 0.5 * 100 * (observed[0] - 0.3) ** 2)
