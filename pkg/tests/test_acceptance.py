"""One test per acceptance criterion, each printing a PASS/FAIL line.

The heavier runs (criteria 1-3, 5 and 6) take a few minutes in total on
one core.
"""

import math
import sys
from pathlib import Path

import numpy as np
import yaml

from synlik.cli import EXIT_OK, main
from synlik.core import Prior, SeedStream, Uniform
from synlik.harness import ExperimentSpec, run_experiment
from synlik.mcmc import ProposalConfig, diagnostics, run_chain, run_rbsl_chain
from synlik.models import GaussianToy, toy_partial_posterior
from synlik.synthetic_likelihood import BslTarget, shrink_covariance

from conftest import CountingModel

CHILD = str(Path(__file__).with_name("sim_child.py"))
TOY = GaussianToy(n=100, sigma0=1.0, mu0=0.0, tau0=1.0, d_s=1)
OBSERVED = np.array([0.3])


def toy_bsl(M, iterations, seed, burn_in=2000):
    target = BslTarget(TOY, OBSERVED, M)
    trace = run_chain(None, iterations, burn_in, target, TOY.default_prior(), ProposalConfig((0.15,)), SeedStream(seed))
    return diagnostics(trace)


def test_criterion_1_conjugate_oracle(report):
    d = toy_bsl(100, 50_000, seed=101)
    mean, sd = toy_partial_posterior(float(OBSERVED[0]), TOY)
    ess = float(d.ess[0])
    se_mean = d.sd[0] / math.sqrt(ess)
    se_sd = d.sd[0] / math.sqrt(2 * ess)
    z_mean = abs(d.mean[0] - mean) / se_mean
    z_sd = abs(d.sd[0] - sd) / se_sd
    report(
        1,
        "conjugate oracle",
        z_mean < 3 and z_sd < 3,
        f"mean {d.mean[0]:.5f} vs {mean:.5f} ({z_mean:.2f} MC-SE), sd {d.sd[0]:.5f} vs {sd:.5f} ({z_sd:.2f} MC-SE), ESS {ess:.0f}",
    )


def test_criterion_2_m_insensitivity(report):
    small = toy_bsl(20, 100_000, seed=201)
    large = toy_bsl(200, 100_000, seed=202)
    rel = abs(small.sd[0] - large.sd[0]) / large.sd[0]
    report(2, "M-insensitivity", rel < 0.15, f"sd(M=20) {small.sd[0]:.5f}, sd(M=200) {large.sd[0]:.5f}, relative difference {rel:.3f} (< 0.15)")


def test_criterion_3_abc_bsl_agreement(report):
    spec = ExperimentSpec("compare_abc_bsl", ds_list=[2], M_list=[20], eps_quantile=0.005, replicates=4, root_seed=301)
    res = run_experiment(spec)
    oracle, _ = res.get("oracle_mean", d_s=2)
    parts, ok = [], True
    for method in ("bsl", "abc"):
        err, se = res.get("oracle_error", method=method, d_s=2)
        within = abs(err) < 3 * se
        ok &= within
        parts.append(f"{method} mean error {err:+.5f} ({abs(err) / se:.2f} MC-SE)")
    bsl_eff, _ = res.get("ess_per_sim", method="bsl", d_s=2)
    abc_eff, _ = res.get("ess_per_sim", method="abc", d_s=2)
    ok &= bsl_eff > abc_eff
    parts.append(f"ESS/sim bsl {bsl_eff:.2e} vs abc {abc_eff:.2e}")
    report(3, "ABC/BSL agreement", bool(ok), f"oracle mean {oracle:.5f}; " + "; ".join(parts))


def test_criterion_4_shrinkage_algebra(report):
    rng = np.random.default_rng(401)
    ok = True
    for d in (2, 5, 10):
        a = rng.normal(size=(d, d + 2))
        cov = a @ a.T
        one = shrink_covariance(cov, 1.0)
        zero = shrink_covariance(cov, 0.0)
        ok &= np.max(np.abs(one - cov)) <= 1e-14 * max(1.0, np.max(np.abs(cov)))
        ok &= np.array_equal(zero, np.diag(np.diag(cov)))
        for g in (0.0, 0.25, 0.5, 0.75, 1.0):
            ok &= np.array_equal(np.diag(shrink_covariance(cov, g)), np.diag(cov))
    hand = shrink_covariance(np.array([[4.0, 2.0], [2.0, 9.0]]), 0.5)
    ok &= np.array_equal(hand, np.array([[4.0, 1.0], [1.0, 9.0]]))
    report(4, "shrinkage algebra", bool(ok), f"identity, diagonal and diagonal-preservation checks; 2x2 case -> {hand.tolist()}")


def test_criterion_5_variance_scaling(report):
    spec = ExperimentSpec("sl_variance_scaling", ds_list=[5, 10, 20], M_list=[50], gamma=0.0, replicates=500, root_seed=501)
    res = run_experiment(spec)
    std = [res.get("loglik_variance", d_s=d, M=50, estimator="standard")[0] for d in (5, 10, 20)]
    wht20 = res.get("loglik_variance", d_s=20, M=50, estimator="whitened")[0]
    monotone = std[0] < std[1] < std[2]
    report(
        5,
        "variance scaling",
        monotone and wht20 < std[2],
        f"standard var {', '.join(f'{v:.3g}' for v in std)} for d_s 5/10/20; whitened(gamma=0) at d_s=20 {wht20:.3g}",
    )


def test_criterion_6_misspecification(report):
    spec = ExperimentSpec(
        "misspecification_demo",
        M_list=[400],
        replicates=20,
        root_seed=601,
        options={"methods": ["rbsl"], "sigma_true": [1.0, 2.0]},
    )
    res = run_experiment(spec)
    g2, _ = res.get("gamma_2_median", method="rbsl", sigma_true=2.0)
    a2, _ = res.get("abs_gamma_2_median", method="rbsl", sigma_true=1.0)
    cov, _ = res.get("theta_covered", method="rbsl", sigma_true=2.0)
    report(
        6,
        "misspecification",
        g2 > 1 and a2 < 0.5 and cov >= 0.9,
        f"Gamma_2 median {g2:.2f} at sigma_true=2 (> 1); |Gamma_2| median {a2:.3f} at sigma_true=1 (< 0.5); "
        f"theta 95% interval coverage {cov:.2f} over 20 datasets (>= 0.90)",
    )


class CountingPrior(Prior):
    log: list = []

    def logpdf(self, theta):
        value = super().logpdf(theta)
        CountingPrior.log.append((np.array(theta, dtype=float), value))
        return value


def test_criterion_7_pseudo_marginal_discipline(report):
    steps = 1000
    CountingPrior.log = []
    prior = CountingPrior((Uniform(0.0, 0.6),))
    model = CountingModel(GaussianToy())
    target = BslTarget(model, OBSERVED, 20)
    trace = run_chain([0.3], steps, 0, target, prior, ProposalConfig((0.1,), adaptation="off"), SeedStream(701))

    proposals = CountingPrior.log[1:]  # first entry is the starting point
    in_support = [t for t, lp in proposals if lp > -math.inf]
    batches = model.batches
    checks = {
        "one logpdf per step": len(proposals) == steps,
        "one batch per in-support proposal": len(batches) == 1 + len(in_support),
        "batches at proposals only": all(np.array_equal(b[0], t) for b, t in zip(batches[1:], in_support)),
        "fresh seeds every batch": len({tuple(s) for _, s in batches}) == len(batches),
    }
    prev_theta, prev_ll = np.array([0.3]), None
    never_current = True
    retained = True
    k = 0
    for t in range(steps):
        theta_t, lp = proposals[t]
        if lp > -math.inf:
            never_current &= not np.array_equal(batches[1 + k][0], prev_theta)
            k += 1
        if not trace.accepted[t] and prev_ll is not None:
            retained &= trace.loglik[t] == prev_ll
        prev_theta, prev_ll = trace.theta[t], trace.loglik[t]
    checks["no batch at the current state"] = bool(never_current)
    checks["rejections keep the retained estimate"] = bool(retained)

    rmodel = CountingModel(GaussianToy(d_s=2))
    rbsl = run_rbsl_chain(None, steps, 0, rmodel, [0.3, 0.0], 20, 0.5, rmodel.default_prior(), ProposalConfig((0.1,)), SeedStream(702))
    checks["robust sweeps simulate once"] = len(rmodel.batches) == steps + 1 and len(rbsl) == steps

    failed = [name for name, ok in checks.items() if not ok]
    report(
        7,
        "pseudo-marginal discipline",
        not failed,
        f"{steps} steps, {len(in_support)} in-support proposals, {len(batches)} batches; "
        + ("all call-count checks hold" if not failed else f"failed: {failed}"),
    )


def _cli_run(cfg_path, out):
    return main(["run", str(cfg_path), "--output", str(out)])


def test_criterion_8_determinism(report, tmp_path):
    configs = {
        "bsl_whitened": {
            "method": "bsl", "model": "ma2", "observed": {"theta": [0.6, 0.2], "seed": 3},
            "estimator": {"M": 40, "whitening": True, "M0": 300, "gamma": 0.5, "theta0": [0.6, 0.2]},
            "sampler": {"iterations": 300, "burn_in": 100}, "seed": 8001, "workers": 4,
        },
        "rbsl": {
            "method": "rbsl", "model": "contaminated_normal", "observed": {"theta": [0.0], "seed": 4},
            "estimator": {"M": 50}, "sampler": {"iterations": 300, "burn_in": 100}, "seed": 8002, "workers": 3,
        },
        "abc_mcmc": {
            "method": "abc-mcmc", "model": "gaussian_toy", "observed": [0.3],
            "abc": {"budget": 2000, "pilot_budget": 500, "quantile": 0.05},
            "sampler": {"iterations": 500, "burn_in": 100}, "seed": 8003, "workers": 2,
        },
        "external": {
            "method": "bsl", "external": {"command": [sys.executable, CHILD, "toy"], "d_theta": 1, "d_s": 1, "n": 20},
            "prior": [{"dist": "normal", "mean": 0.0, "sd": 1.0}], "observed": [0.1],
            "estimator": {"M": 10}, "sampler": {"iterations": 100, "burn_in": 10}, "seed": 8004, "workers": 2,
        },
    }
    results = {}
    for name, cfg in configs.items():
        path = tmp_path / f"{name}.yaml"
        path.write_text(yaml.safe_dump(cfg))
        first, again, serial = tmp_path / f"{name}_1", tmp_path / f"{name}_2", tmp_path / f"{name}_s"
        codes = [_cli_run(path, first), _cli_run(first / "config.yaml", again)]
        snap = yaml.safe_load((first / "config.yaml").read_text())
        snap["workers"] = 1
        (tmp_path / f"{name}_serial.yaml").write_text(yaml.safe_dump(snap))
        codes.append(_cli_run(tmp_path / f"{name}_serial.yaml", serial))
        trace = (first / "trace.csv").read_bytes()
        results[name] = (
            codes == [EXIT_OK] * 3
            and trace == (again / "trace.csv").read_bytes()
            and trace == (serial / "trace.csv").read_bytes()
        )
    spec = tmp_path / "exp.yaml"
    spec.write_text(yaml.safe_dump({"experiment": "sl_variance_scaling", "ds_list": [4], "M_list": [12], "replicates": 30, "root_seed": 8005}))
    e1, e2 = tmp_path / "e1", tmp_path / "e2"
    ok_exp = main(["experiment", str(spec), "--output", str(e1)]) == EXIT_OK
    ok_exp &= main(["experiment", str(e1 / "experiment.yaml"), "--output", str(e2)]) == EXIT_OK
    results["experiment"] = ok_exp and (e1 / "result.csv").read_bytes() == (e2 / "result.csv").read_bytes()
    failed = [k for k, v in results.items() if not v]
    report(
        8,
        "determinism",
        not failed,
        f"snapshot re-runs byte-identical for {', '.join(results)} (parallel and serial)" if not failed else f"mismatch in {failed}",
    )
