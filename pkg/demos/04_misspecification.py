"""
Robust BSL under a misspecified variance
========================================

The assumed model is N(theta, 1), but the data come from N(0, 2^2). The
observed sample variance is near 4 and no theta can reproduce it. Robust
BSL adds one adjustment per summary, shifting the synthetic-likelihood
mean by sd * Gamma under a Laplace(0, 0.5) prior. The adjustment for the
variance summary absorbs the mismatch.
"""

import numpy as np

from synlik import BslTarget, ContaminatedNormal, ProposalConfig, SeedStream, diagnostics, run_chain, run_rbsl_chain

for sigma_true in (1.0, 2.0):
    model = ContaminatedNormal(n=100, sigma_true=sigma_true)
    prior = model.default_prior()
    observed = model.observe(seed=11)
    print(f"\nsigma_true={sigma_true}: observed (mean, variance) = {np.round(observed, 3)}")

    rob = run_rbsl_chain(None, 3000, 2000, model, observed, 400, 0.5, prior, ProposalConfig((0.15,)), SeedStream(12))
    d = diagnostics(rob)
    print(f"  robust BSL: theta mean {d.mean[0]:+.3f}, 95% interval [{d.quantiles[0, 0]:+.3f}, {d.quantiles[2, 0]:+.3f}]")
    print(f"              Gamma medians {np.round(d.gamma.quantiles[1], 2)}, acceptance {d.acceptance_rate:.2f}")

    std = run_chain(None, 3000, 2000, BslTarget(model, observed, 400), prior, ProposalConfig((0.15,)), SeedStream(13))
    ds = diagnostics(std)
    print(f"  standard BSL: theta mean {ds.mean[0]:+.3f}, sd {ds.sd[0]:.3f}, acceptance {ds.acceptance_rate:.2f}, ESS {ds.ess[0]:.0f}")

# At sigma_true = 2 the robust posterior flags the variance summary with a
# large Gamma_2. The mean-only adjustment does not widen the theta
# posterior to the true sampling spread of the observed mean (sd 0.2 here).
