"""Desk-scale experiments comparing ABC and BSL variants.

Each experiment returns an :class:`ExperimentResult`: long-format rows of
``(experiment, cell, metric, value, mcse)``. Every value is an average over
independent replicates and ``mcse`` is its replicate standard error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .abc import AbcKernelConfig, AbcTarget, abc_rejection_table, chain_start, pilot_covariance, rejection_scales
from .core import SeedStream, simulate_batch
from .mcmc import ProposalConfig, diagnostics, run_chain, run_rbsl_chain
from .models import ContaminatedNormal, GaussianMeans, GaussianToy, toy_partial_posterior
from .synthetic_likelihood import BslTarget, NonPositiveDefinite, Standard, Whitened, fit_whitening, synthetic_loglik

__all__ = [
    "EXPERIMENTS",
    "ExperimentSpec",
    "ExperimentResult",
    "run_experiment",
    "run_compare_abc_bsl",
    "run_sl_variance_scaling",
    "run_misspecification_demo",
]

EXPERIMENTS = ("compare_abc_bsl", "sl_variance_scaling", "misspecification_demo")

_DEFAULT_MODEL = {
    "compare_abc_bsl": "gaussian_toy",
    "sl_variance_scaling": "gaussian_means",
    "misspecification_demo": "contaminated_normal",
}
_ALLOWED_MODELS = {
    "compare_abc_bsl": ("gaussian_toy",),
    "sl_variance_scaling": ("gaussian_means", "gaussian_toy"),
    "misspecification_demo": ("contaminated_normal",),
}
_OPTIONS = {
    "compare_abc_bsl": {
        "n": 100, "theta_true": 0.3, "budget": 100_000, "abc_M": 1, "pilot_budget": 2000,
        "rejection_budget": 10_000, "kernel": "uniform", "scale": 0.1, "burn_in_fraction": 0.1,
        "observed_seed": 0,
    },
    "sl_variance_scaling": {"n": 100, "rho": 0.5, "theta_true": 0.0, "M0": 2000, "observed_seed": 0},
    "misspecification_demo": {
        "n": 100, "theta_true": 0.0, "sigma_true": [1.0, 2.0], "lam": 0.5, "iterations": 3000,
        "burn_in": 2000, "scale": 0.15, "methods": ["bsl", "rbsl"], "predictive_draws": 200,
    },
}


class ExperimentError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    experiment: str
    model: str | None = None
    ds_list: list[int] = field(default_factory=lambda: [1])
    M_list: list[int] = field(default_factory=lambda: [20])
    gamma: float = 0.0
    eps_quantile: float = 0.005
    replicates: int = 4
    root_seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        errors = []
        if self.experiment not in EXPERIMENTS:
            errors.append(f"experiment: unknown id {self.experiment!r}; choose from {EXPERIMENTS}")
        else:
            self.model = self.model or _DEFAULT_MODEL[self.experiment]
            if self.model not in _ALLOWED_MODELS[self.experiment]:
                errors.append(f"model: {self.model!r} not supported by {self.experiment}")
            unknown = set(self.options) - set(_OPTIONS[self.experiment])
            if unknown:
                errors.append(f"options: unknown keys {sorted(unknown)}")
            self.options = {**_OPTIONS[self.experiment], **self.options}
        if not self.ds_list:
            errors.append("ds_list: must be non-empty")
        if not self.M_list:
            errors.append("M_list: must be non-empty")
        if any(int(d) < 1 for d in self.ds_list):
            errors.append("ds_list: entries must be >= 1")
        if any(int(m) < 2 for m in self.M_list):
            errors.append("M_list: entries must be >= 2")
        if not 0.0 <= self.gamma <= 1.0:
            errors.append(f"gamma: {self.gamma} outside [0, 1]")
        if not 0.0 < self.eps_quantile <= 1.0:
            errors.append(f"eps_quantile: {self.eps_quantile} outside (0, 1]")
        if self.replicates < 2:
            errors.append(f"replicates: need at least 2, got {self.replicates}")
        if errors:
            raise ExperimentError("; ".join(errors))

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment, "model": self.model, "ds_list": list(self.ds_list),
            "M_list": list(self.M_list), "gamma": self.gamma, "eps_quantile": self.eps_quantile,
            "replicates": self.replicates, "root_seed": self.root_seed, "options": dict(self.options),
        }


def _cell_key(cell: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in cell.items())


@dataclass
class ExperimentResult:
    experiment: str
    rows: list[tuple[str, str, str, float, float]] = field(default_factory=list)

    def add(self, cell: dict, metric: str, value: float, mcse: float) -> None:
        self.rows.append((self.experiment, _cell_key(cell), metric, float(value), float(mcse)))

    def add_replicates(self, cell: dict, metric: str, values) -> None:
        v = np.asarray(values, dtype=np.float64)
        self.add(cell, metric, v.mean(), v.std(ddof=1) / math.sqrt(v.size))

    def sort(self) -> ExperimentResult:
        self.rows.sort(key=lambda r: (r[1], r[2]))
        return self

    def get(self, metric: str, **cell) -> tuple[float, float]:
        key = _cell_key(cell)
        for _, c, m, v, se in self.rows:
            if c == key and m == metric:
                return v, se
        raise KeyError(f"no row {metric!r} for cell {key!r}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "cell", "metric", "value", "mcse"])
            for e, c, m, v, se in self.rows:
                w.writerow([e, c, m, repr(v), repr(se)])


# ---------------------------------------------------------------------------
# ABC vs BSL


def run_compare_abc_bsl(spec: ExperimentSpec) -> ExperimentResult:
    """ABC-MCMC and BSL-MCMC on the Gaussian toy with equal simulator budgets.

    ABC spends part of its budget on a pilot covariance (Mahalanobis
    distance) and a rejection run that sets epsilon at ``eps_quantile``;
    the rest goes to its chain. BSL uses ``M_list[0]`` simulations per step.
    """
    o = spec.options
    res = ExperimentResult(spec.experiment)
    root = SeedStream(spec.root_seed)
    M_bsl = int(spec.M_list[0])
    for ci, d_s in enumerate(spec.ds_list):
        cell_seeds = root.child(ci)
        model = GaussianToy(n=o["n"], d_s=int(d_s))
        prior = model.default_prior()
        observed = model.observe([o["theta_true"]], cell_seeds.child(0).seed)
        oracle_mean, oracle_sd = toy_partial_posterior(float(observed[0]), model)
        cell = {"d_s": d_s}
        res.add(cell, "oracle_mean", oracle_mean, 0.0)
        res.add(cell, "oracle_sd", oracle_sd, 0.0)

        per_method = {"bsl": [], "abc": []}
        for r in range(spec.replicates):
            rs = cell_seeds.child(1).child(r)
            per_method["bsl"].append(_bsl_replicate(model, prior, observed, M_bsl, o, rs.child(0)))
            per_method["abc"].append(_abc_replicate(model, prior, observed, spec, o, rs.child(1)))
        for method, reps in per_method.items():
            mcell = {"method": method, **cell}
            for metric in reps[0]:
                res.add_replicates(mcell, metric, [rep[metric] for rep in reps])
            res.add_replicates(mcell, "oracle_error", [rep["mean"] - oracle_mean for rep in reps])
    return res.sort()


def _chain_metrics(trace, sims: int) -> dict:
    d = diagnostics(trace)
    return {
        "mean": float(d.mean[0]),
        "sd": float(d.sd[0]),
        "ess": float(d.ess[0]),
        "acceptance": d.acceptance_rate,
        "simulations": float(sims),
        "ess_per_sim": float(d.ess[0]) / sims,
    }


def _split_budget(budget: int, per_step: int, fraction: float, init_evals: int = 1) -> tuple[int, int]:
    # ``init_evals`` evaluations go to the starting point
    steps = budget // per_step - init_evals
    if steps < 1:
        raise ExperimentError(f"budget {budget} too small for {per_step} simulations per step")
    burn = int(steps * fraction)
    return steps - burn, burn


def _bsl_replicate(model, prior, observed, M, o, seeds) -> dict:
    iterations, burn_in = _split_budget(o["budget"], M, o["burn_in_fraction"])
    target = BslTarget(model, observed, M)
    trace = run_chain(None, iterations, burn_in, target, prior, ProposalConfig((o["scale"],)), seeds, model.name)
    return _chain_metrics(trace, trace.simulations)


def _abc_replicate(model, prior, observed, spec, o, seeds) -> dict:
    pilot = pilot_covariance(model, prior.mean, seeds.child(0), o["pilot_budget"])
    cfg = AbcKernelConfig(1.0, o["kernel"], o["abc_M"], "mahalanobis", pilot)
    table, eps = abc_rejection_table(
        model, prior, observed, o["rejection_budget"], spec.eps_quantile, cfg, seeds.child(1)
    )
    cfg = cfg.with_epsilon(eps)
    spent = o["pilot_budget"] + o["rejection_budget"]
    target = AbcTarget(model, observed, cfg)
    accepted = table.thetas[table.distances <= eps]
    init, init_loglik = chain_start(table, cfg) if cfg.M == 1 else (accepted.mean(axis=0), None)
    # a start taken from the table costs no further simulation
    init_evals = 0 if init_loglik is not None else 1
    iterations, burn_in = _split_budget(o["budget"] - spent, o["abc_M"], o["burn_in_fraction"], init_evals)
    # acceptance is capped by the hit probability, so scale adaptation toward
    # 0.234 would shrink the step forever; size it from the rejection draws
    proposal = ProposalConfig(tuple(rejection_scales(accepted)), adaptation="off")
    trace = run_chain(init, iterations, burn_in, target, prior, proposal, seeds.child(2), model.name, init_loglik)
    out = _chain_metrics(trace, trace.simulations + spent)
    out["epsilon"] = eps
    return out


# ---------------------------------------------------------------------------
# log-SL variance scaling


def _variance_mcse(x: np.ndarray) -> tuple[float, float]:
    """Sample variance and its standard error from the fourth central moment."""
    n = x.size
    s2 = float(np.var(x, ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    v = (m4 - (n - 3) / (n - 1) * s2 * s2) / n
    return s2, math.sqrt(max(v, 0.0))


def run_sl_variance_scaling(spec: ExperimentSpec) -> ExperimentResult:
    """Replicate variance of the log synthetic likelihood at the true parameter.

    For every (d_s, M) cell the standard estimator and whitening followed by
    shrinkage at ``spec.gamma`` are evaluated on the same seeds. Standard
    cells with M <= d_s + 1 are reported as skipped.
    """
    o = spec.options
    res = ExperimentResult(spec.experiment)
    root = SeedStream(spec.root_seed)
    theta = np.array([o["theta_true"]])
    cell_index = 0
    for di, d_s in enumerate(spec.ds_list):
        d_s = int(d_s)
        if spec.model == "gaussian_means":
            model = GaussianMeans(d_s=d_s, n=o["n"], rho=o["rho"])
        else:
            model = GaussianToy(n=o["n"], d_s=d_s)
        ds_seeds = root.child(0).child(di)
        observed = model.observe(theta, ds_seeds.child(0).seed)
        whitening = fit_whitening(model, theta, int(o["M0"]), ds_seeds.child(1))
        estimators = {"standard": Standard(), "whitened": Whitened(whitening, spec.gamma)}
        for M in spec.M_list:
            M = int(M)
            cell_seeds = root.child(1).child(cell_index)
            cell_index += 1
            values = {}
            for name, est in estimators.items():
                cell = {"d_s": d_s, "M": M, "estimator": name}
                minimum = 3 if name == "whitened" and spec.gamma == 0.0 else d_s + 2
                if M < minimum:
                    res.add(cell, "skipped", 1.0, 0.0)
                    continue
                ll = []
                for r in range(spec.replicates):
                    try:
                        ll.append(synthetic_loglik(model, theta, observed, M, est, cell_seeds.child(r)))
                    except NonPositiveDefinite:
                        ll.append(-math.inf)
                ll = np.array(ll)
                finite = np.isfinite(ll)
                res.add(cell, "failed_fraction", 1.0 - finite.mean(), 0.0)
                var, se = _variance_mcse(ll[finite])
                res.add(cell, "loglik_variance", var, se)
                res.add_replicates(cell, "loglik_mean", ll[finite])
                values[name] = (var, se)
            if len(values) == 2:
                (vs, ss), (vw, sw) = values["standard"], values["whitened"]
                ratio = vs / vw
                res.add({"d_s": d_s, "M": M}, "variance_ratio", ratio, ratio * math.hypot(ss / vs, sw / vw))
    return res.sort()


# ---------------------------------------------------------------------------
# misspecification


def _predictive_covered(model, trace, observed, draws: int, seeds: SeedStream) -> np.ndarray:
    idx = np.linspace(0, len(trace) - 1, min(draws, len(trace))).astype(int)
    sims = simulate_batch(model, None, idx.size, seeds, thetas=trace.theta[idx])
    lo, hi = np.quantile(sims, [0.025, 0.975], axis=0)
    return (observed >= lo) & (observed <= hi)


def run_misspecification_demo(spec: ExperimentSpec) -> ExperimentResult:
    """Standard BSL and robust BSL on independent contaminated-normal datasets.

    One cell per (method, sigma_true); ``replicates`` datasets per cell.
    Reports theta posterior summaries, 95% interval coverage of theta_true,
    posterior medians of the adjustments (robust BSL) and posterior
    predictive coverage of each observed summary.
    """
    o = spec.options
    res = ExperimentResult(spec.experiment)
    root = SeedStream(spec.root_seed)
    M = int(spec.M_list[0])
    for si, sigma_true in enumerate(o["sigma_true"]):
        model = ContaminatedNormal(n=o["n"], sigma_true=float(sigma_true), theta_true=o["theta_true"])
        prior = model.default_prior()
        per_method = {m: [] for m in o["methods"]}
        for r in range(spec.replicates):
            rs = root.child(si).child(r)
            observed = model.observe(o["theta_true"], rs.child(0).seed)
            for mi, method in enumerate(o["methods"]):
                ms = rs.child(1 + mi)
                proposal = ProposalConfig((o["scale"],))
                if method == "rbsl":
                    trace = run_rbsl_chain(
                        None, o["iterations"], o["burn_in"], model, observed, M, o["lam"], prior, proposal, ms
                    )
                elif method == "bsl":
                    target = BslTarget(model, observed, M)
                    trace = run_chain(None, o["iterations"], o["burn_in"], target, prior, proposal, ms, model.name)
                else:
                    raise ExperimentError(f"options.methods: unknown method {method!r}")
                d = diagnostics(trace)
                lo, hi = d.quantiles[0, 0], d.quantiles[2, 0]
                rep = {
                    "theta_mean": d.mean[0],
                    "theta_sd": d.sd[0],
                    "theta_covered": float(lo <= o["theta_true"] <= hi),
                    "acceptance": d.acceptance_rate,
                }
                covered = _predictive_covered(model, trace, observed, o["predictive_draws"], ms.child(99))
                for k, c in enumerate(covered):
                    rep[f"predictive_covered_{k + 1}"] = float(c)
                if d.gamma is not None:
                    for k in range(model.d_s):
                        rep[f"gamma_{k + 1}_median"] = d.gamma.quantiles[1, k]
                        rep[f"abs_gamma_{k + 1}_median"] = float(np.median(np.abs(trace.gamma[:, k])))
                per_method[method].append(rep)
        for method, reps in per_method.items():
            cell = {"method": method, "sigma_true": float(sigma_true)}
            for metric in reps[0]:
                res.add_replicates(cell, metric, [rep[metric] for rep in reps])
    return res.sort()


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    runners = {
        "compare_abc_bsl": run_compare_abc_bsl,
        "sl_variance_scaling": run_sl_variance_scaling,
        "misspecification_demo": run_misspecification_demo,
    }
    return runners[spec.experiment](spec)
