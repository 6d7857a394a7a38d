"""
Shrinkage, whitening and the cost of many summaries
===================================================

With d_s correlated summaries the sample covariance has d_s(d_s+1)/2
entries to estimate, and the variance of the log synthetic likelihood
grows with d_s at fixed M. Whitening at a central parameter value and then
shrinking the covariance to its diagonal leaves only d_s variances.
"""

import numpy as np

from synlik import ExperimentSpec, GaussianMeans, SeedStream, Shrinkage, Standard, Whitened, fit_whitening
from synlik import run_experiment, shrink_covariance, synthetic_loglik

# shrinkage pulls correlations toward zero and keeps the variances
cov = np.array([[4.0, 2.0], [2.0, 9.0]])
for g in (1.0, 0.5, 0.0):
    print(f"gamma={g}:", shrink_covariance(cov, g).tolist())

# one log-likelihood evaluation under each estimator
model = GaussianMeans(d_s=10, rho=0.5)
theta = [0.0]
observed = model.observe(theta, seed=1)
w = fit_whitening(model, theta, M0=2000, seeds=SeedStream(2))
for name, est in [("standard", Standard()), ("shrinkage 0.5", Shrinkage(0.5)), ("whitened", Whitened(w, 1.0)), ("whitened, gamma=0", Whitened(w, 0.0))]:
    vals = [synthetic_loglik(model, theta, observed, 30, est, SeedStream(3).child(i)) for i in range(200)]
    print(f"{name:18s} mean {np.mean(vals):8.3f}  variance {np.var(vals, ddof=1):7.3f}")

# replicate variance over a grid of summary dimensions; each d_s conditions
# on one observed summary, so the standard column need not rise monotonically
spec = ExperimentSpec("sl_variance_scaling", ds_list=[5, 10, 20], M_list=[50], gamma=0.0, replicates=200, root_seed=4)
result = run_experiment(spec)
for d_s in (5, 10, 20):
    vs, ss = result.get("loglik_variance", d_s=d_s, M=50, estimator="standard")
    vw, sw = result.get("loglik_variance", d_s=d_s, M=50, estimator="whitened")
    print(f"d_s={d_s:2d}: standard {vs:8.3f} +/- {ss:6.3f}   whitened(gamma=0) {vw:6.3f} +/- {sw:5.3f}")
