"""Command-line entry point.

::

    synlik run <config.yaml> [--output DIR]
    synlik validate <config.yaml>
    synlik experiment <spec.yaml> [--output DIR]
    synlik diagnose <trace.csv>

A run directory holds ``config.yaml`` (the fully resolved configuration),
``seed.txt``, ``trace.csv`` and ``summary.json``; experiment directories
hold ``experiment.yaml``, ``seed.txt``, ``result.csv`` and ``summary.json``.
Re-running a snapshot reproduces its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .abc import AbcKernelConfig, AbcTarget, abc_rejection, abc_rejection_table, chain_start, pilot_covariance, rejection_scales
from .core import Normal, Prior, SeedStream, Uniform
from .external import ExternalSimulator, ExternalSimulatorSpec, ProtocolError
from .harness import ExperimentError, ExperimentSpec, run_experiment
from .mcmc import InitializationError, ProposalConfig, Trace, diagnostics, run_chain, run_rbsl_chain
from .models import MODELS, build_model
from .synthetic_likelihood import BslTarget, NonPositiveDefinite, Shrinkage, Standard, Whitened, fit_whitening

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INIT = 3
EXIT_PROTOCOL = 4
EXIT_IO = 5

METHODS = ("bsl", "rbsl", "abc-mcmc", "abc-rejection")

DEFAULTS = {
    "method": None,
    "model": None,
    "model_options": {},
    "external": None,
    "prior": None,
    "observed": None,
    "estimator": {"M": 100, "gamma": 1.0, "whitening": False, "M0": 2000, "theta0": None},
    "sampler": {
        "iterations": 10_000, "burn_in": 1000, "scales": None, "adaptation": "diminishing",
        "target_accept": 0.234, "init": None,
    },
    "abc": {
        "kernel": "uniform", "epsilon": None, "quantile": 0.05, "M": 1, "distance": "mahalanobis",
        "pilot_budget": 2000, "budget": 10_000,
    },
    "robust": {"lambda": 0.5, "gamma_scale": 0.5},
    "seed": 0,
    "output": "run",
    "workers": 1,
}
_EXTERNAL_KEYS = {"command", "d_theta", "d_s", "n", "timeout"}
_PRIOR_KEYS = {"normal": {"dist", "mean", "sd"}, "uniform": {"dist", "low", "high"}}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class RunConfig:
    method: str
    model: str | None
    model_options: dict
    external: dict | None
    prior: list | None
    observed: list | dict
    estimator: dict
    sampler: dict
    abc: dict
    robust: dict
    seed: int
    output: str
    workers: int
    source: Path | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in DEFAULTS}


# ---------------------------------------------------------------------------
# validation


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_section(raw: dict, name: str, errors: list) -> dict:
    default = DEFAULTS[name]
    value = raw.get(name)
    if value is None:
        return copy.deepcopy(default)
    if not isinstance(value, dict):
        errors.append(f"{name}: must be a mapping")
        return copy.deepcopy(default)
    for k in sorted(set(value) - set(default)):
        errors.append(f"{name}.{k}: unknown key")
    return {**copy.deepcopy(default), **{k: v for k, v in value.items() if k in default}}


def _check_prior(prior, errors: list):
    if prior is None:
        return
    if not isinstance(prior, list) or not prior:
        errors.append("prior: must be a non-empty list of marginals")
        return
    for i, m in enumerate(prior):
        where = f"prior[{i}]"
        if not isinstance(m, dict) or m.get("dist") not in _PRIOR_KEYS:
            errors.append(f"{where}: needs dist 'normal' or 'uniform'")
            continue
        allowed = _PRIOR_KEYS[m["dist"]]
        for k in sorted(set(m) - allowed):
            errors.append(f"{where}.{k}: unknown key")
        for k in sorted(allowed - {"dist"} - set(m)):
            errors.append(f"{where}.{k}: missing")
        if m["dist"] == "normal" and "sd" in m and not (_is_num(m["sd"]) and m["sd"] > 0):
            errors.append(f"{where}.sd: must be > 0, got {m['sd']!r}")
        if m["dist"] == "uniform" and {"low", "high"} <= set(m):
            if not (_is_num(m["low"]) and _is_num(m["high"]) and m["low"] < m["high"]):
                errors.append(f"{where}: need low < high, got ({m['low']!r}, {m['high']!r})")


def _range(errors, where, value, lo=None, hi=None, integer=False, lo_open=False):
    ok = _is_int(value) if integer else _is_num(value)
    if ok and lo is not None:
        ok = value > lo if lo_open else value >= lo
    if ok and hi is not None:
        ok = value <= hi
    if not ok:
        kind = "an integer" if integer else "a number"
        bounds = f" in {'(' if lo_open else '['}{lo}, {hi if hi is not None else 'inf'}]" if lo is not None else ""
        errors.append(f"{where}: must be {kind}{bounds}, got {value!r}")


def validate_config(raw, source: Path | None = None) -> RunConfig:
    """Validate a parsed config mapping; raises :class:`ConfigError` listing every violation."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a mapping at top level"])
    for k in sorted(set(raw) - set(DEFAULTS)):
        errors.append(f"{k}: unknown key")

    method = raw.get("method")
    if method not in METHODS:
        errors.append(f"method: must be one of {METHODS}, got {method!r}")

    model, external = raw.get("model"), raw.get("external")
    if model is not None and external is not None:
        errors.append("model/external: a built-in model and an external command are mutually exclusive")
    elif model is None and external is None:
        errors.append("model: give a built-in model name or an external simulator")
    if model is not None and model not in MODELS:
        errors.append(f"model: unknown built-in {model!r}; choose from {sorted(MODELS)}")
    model_options = raw.get("model_options") or {}
    if not isinstance(model_options, dict):
        errors.append("model_options: must be a mapping")
        model_options = {}
    if external is not None:
        if not isinstance(external, dict):
            errors.append("external: must be a mapping")
        else:
            for k in sorted(set(external) - _EXTERNAL_KEYS):
                errors.append(f"external.{k}: unknown key")
            for k in ("command", "d_theta", "d_s", "n"):
                if k not in external:
                    errors.append(f"external.{k}: missing")
            for k in ("d_theta", "d_s", "n"):
                if k in external:
                    _range(errors, f"external.{k}", external[k], 1, integer=True)
            if "timeout" in external:
                _range(errors, "external.timeout", external["timeout"], 0, lo_open=True)
            if raw.get("prior") is None:
                errors.append("prior: required for external simulators")
    _check_prior(raw.get("prior"), errors)

    observed = raw.get("observed")
    if observed is None:
        errors.append("observed: give a summary list or {theta: [...], seed: N}")
    elif isinstance(observed, dict):
        for k in sorted(set(observed) - {"theta", "seed"}):
            errors.append(f"observed.{k}: unknown key")
        if not isinstance(observed.get("theta"), list) or not all(_is_num(x) for x in observed.get("theta") or [None]):
            errors.append("observed.theta: must be a list of numbers")
        if "seed" in observed:
            _range(errors, "observed.seed", observed["seed"], 0, 2**64 - 1, integer=True)
    elif not (isinstance(observed, list) and observed and all(_is_num(x) for x in observed)):
        errors.append("observed: must be a non-empty list of numbers")

    est = _check_section(raw, "estimator", errors)
    _range(errors, "estimator.M", est["M"], 2, integer=True)
    _range(errors, "estimator.gamma", est["gamma"], 0.0, 1.0)
    _range(errors, "estimator.M0", est["M0"], 3, integer=True)
    if not isinstance(est["whitening"], bool):
        errors.append(f"estimator.whitening: must be true or false, got {est['whitening']!r}")
    if est["theta0"] is not None and not (isinstance(est["theta0"], list) and all(_is_num(x) for x in est["theta0"])):
        errors.append("estimator.theta0: must be a list of numbers or null")

    smp = _check_section(raw, "sampler", errors)
    _range(errors, "sampler.iterations", smp["iterations"], 0, integer=True)
    _range(errors, "sampler.burn_in", smp["burn_in"], 0, integer=True)
    _range(errors, "sampler.target_accept", smp["target_accept"], 0.0, 1.0, lo_open=True)
    if smp["adaptation"] not in ("off", "diminishing"):
        errors.append(f"sampler.adaptation: must be 'off' or 'diminishing', got {smp['adaptation']!r}")
    if smp["scales"] is not None and not (
        isinstance(smp["scales"], list) and all(_is_num(s) and s > 0 for s in smp["scales"])
    ):
        errors.append("sampler.scales: must be a list of positive numbers or null")
    if smp["init"] is not None and not (isinstance(smp["init"], list) and all(_is_num(x) for x in smp["init"])):
        errors.append("sampler.init: must be a list of numbers or null")

    abc = _check_section(raw, "abc", errors)
    if abc["kernel"] not in ("uniform", "gaussian"):
        errors.append(f"abc.kernel: must be 'uniform' or 'gaussian', got {abc['kernel']!r}")
    if abc["distance"] not in ("euclidean", "mahalanobis"):
        errors.append(f"abc.distance: must be 'euclidean' or 'mahalanobis', got {abc['distance']!r}")
    if abc["epsilon"] is not None:
        _range(errors, "abc.epsilon", abc["epsilon"], 0.0, lo_open=True)
    _range(errors, "abc.quantile", abc["quantile"], 0.0, 1.0, lo_open=True)
    _range(errors, "abc.M", abc["M"], 1, integer=True)
    _range(errors, "abc.pilot_budget", abc["pilot_budget"], 3, integer=True)
    _range(errors, "abc.budget", abc["budget"], 10, integer=True)

    rob = _check_section(raw, "robust", errors)
    _range(errors, "robust.lambda", rob["lambda"], 0.0, lo_open=True)
    _range(errors, "robust.gamma_scale", rob["gamma_scale"], 0.0, lo_open=True)
    if method == "rbsl" and est["whitening"]:
        errors.append("estimator.whitening: not supported with method rbsl")

    seed = raw.get("seed", DEFAULTS["seed"])
    _range(errors, "seed", seed, 0, 2**64 - 1, integer=True)
    output = raw.get("output", DEFAULTS["output"])
    if not isinstance(output, str) or not output:
        errors.append("output: must be a directory path")
    workers = raw.get("workers", DEFAULTS["workers"])
    _range(errors, "workers", workers, 1, integer=True)

    if source is not None and external is not None and isinstance(external, dict):
        cmd = external.get("command")
        if isinstance(cmd, list) and cmd and isinstance(cmd[-1], str) and cmd[-1].endswith(".py"):
            script = Path(cmd[-1])
            if not script.is_absolute():
                script = source.parent / script
            if not script.exists():
                errors.append(f"external.command: script {cmd[-1]!r} does not exist")

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        method=method, model=model, model_options=dict(model_options), external=external,
        prior=raw.get("prior"), observed=observed, estimator=est, sampler=smp, abc=abc,
        robust=rob, seed=seed, output=output, workers=workers, source=source,
    )


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([f"{path}: file not found"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not well-formed YAML ({exc})"]) from None
    return validate_config(raw, path)


# ---------------------------------------------------------------------------
# running


def _build_prior(spec: list) -> Prior:
    marginals = []
    for m in spec:
        if m["dist"] == "normal":
            marginals.append(Normal(float(m["mean"]), float(m["sd"])))
        else:
            marginals.append(Uniform(float(m["low"]), float(m["high"])))
    return Prior(tuple(marginals))


def _default_scales(prior: Prior) -> list[float]:
    out = []
    for m in prior.marginals:
        out.append(0.1 * m.sd if isinstance(m, Normal) else 0.05 * (m.high - m.low))
    return out


def _open_model(cfg: RunConfig):
    if cfg.model is not None:
        try:
            model = build_model(cfg.model, **cfg.model_options)
        except TypeError as exc:
            raise ConfigError([f"model_options: {exc}"]) from None
        prior = _build_prior(cfg.prior) if cfg.prior else model.default_prior()
        return model, prior
    ext = cfg.external
    command = cfg.external["command"]
    if isinstance(command, list) and cfg.source is not None:
        script = Path(command[-1])
        if command[-1].endswith(".py") and not script.is_absolute():
            command = command[:-1] + [str(cfg.source.parent / script)]
    spec = ExternalSimulatorSpec(command, ext["d_theta"], ext["d_s"], ext["n"], float(ext.get("timeout", 10.0)))
    prior = _build_prior(cfg.prior)
    return ExternalSimulator(spec, prior), prior


def _resolve_observed(cfg: RunConfig, model, seeds: SeedStream) -> np.ndarray:
    obs = cfg.observed
    if isinstance(obs, dict):
        seed = obs.get("seed", seeds.child(0).seed)
        value = model.observe(np.asarray(obs["theta"], dtype=np.float64), int(seed))
    else:
        value = np.asarray(obs, dtype=np.float64)
    if value.shape != (model.d_s,):
        raise ConfigError([f"observed: summary has length {value.size}, model has d_s = {model.d_s}"])
    return value


def _estimator(cfg: RunConfig, model, prior, seeds: SeedStream):
    e = cfg.estimator
    if e["whitening"]:
        theta0 = e["theta0"] if e["theta0"] is not None else prior.mean.tolist()
        w = fit_whitening(model, theta0, e["M0"], seeds, cfg.workers)
        return Whitened(w, e["gamma"])
    if e["gamma"] < 1.0:
        return Shrinkage(e["gamma"])
    return Standard()


def _execute(cfg: RunConfig, out: Path) -> dict:
    root = SeedStream(cfg.seed)
    model, prior = _open_model(cfg)
    try:
        observed = _resolve_observed(cfg, model, root)
        s = cfg.sampler
        if len(prior.marginals) != model.d_theta:
            raise ConfigError([f"prior: {prior.dim} marginals for a model with d_theta = {model.d_theta}"])
        scales = s["scales"] or _default_scales(prior)
        if len(scales) != prior.dim:
            raise ConfigError([f"sampler.scales: {len(scales)} scales for {prior.dim} parameters"])
        proposal = ProposalConfig(tuple(scales), s["adaptation"], s["target_accept"])
        report: dict = {"method": cfg.method, "model": model.name, "observed": observed.tolist()}

        if cfg.method in ("bsl", "rbsl"):
            est = _estimator(cfg, model, prior, root.child(1))
            if cfg.method == "bsl":
                target = BslTarget(model, observed, cfg.estimator["M"], est, cfg.workers)
                trace = run_chain(s["init"], s["iterations"], s["burn_in"], target, prior, proposal, root.child(2), model.name)
            else:
                trace = run_rbsl_chain(
                    s["init"], s["iterations"], s["burn_in"], model, observed, cfg.estimator["M"],
                    cfg.robust["lambda"], prior, proposal, root.child(2), est, cfg.robust["gamma_scale"], cfg.workers,
                )
        else:
            a = cfg.abc
            pilot = None
            if a["distance"] == "mahalanobis":
                pilot = pilot_covariance(model, prior.mean, root.child(3), a["pilot_budget"])
            kcfg = AbcKernelConfig(a["epsilon"] or 1.0, a["kernel"], a["M"], a["distance"], pilot)
            if cfg.method == "abc-rejection":
                accepted, eps = abc_rejection(model, prior, observed, a["budget"], a["quantile"], kcfg, root.child(4), cfg.workers)
                n_acc = len(accepted)
                trace = Trace(accepted, np.zeros(n_acc), np.ones(n_acc, dtype=bool), 0, cfg.seed, simulations=a["budget"])
                report["epsilon"] = eps
                report["reference_table_size"] = a["budget"]
            else:
                init, init_loglik = s["init"], None
                if a["epsilon"] is None:
                    table, eps = abc_rejection_table(model, prior, observed, a["budget"], a["quantile"], kcfg, root.child(4), cfg.workers)
                    kcfg = kcfg.with_epsilon(eps)
                    if init is None:
                        if kcfg.M == 1:
                            init, init_loglik = chain_start(table, kcfg)
                        else:
                            init = table.thetas[table.distances <= eps].mean(axis=0)
                    if s["scales"] is None:
                        accepted = table.thetas[table.distances <= eps]
                        proposal = ProposalConfig(tuple(rejection_scales(accepted)), s["adaptation"], s["target_accept"])
                report["epsilon"] = kcfg.epsilon
                target = AbcTarget(model, observed, kcfg, cfg.workers)
                trace = run_chain(
                    init, s["iterations"], s["burn_in"], target, prior, proposal, root.child(2), model.name, init_loglik
                )
    finally:
        if isinstance(model, ExternalSimulator):
            model.close()

    trace.to_csv(out / "trace.csv")
    if len(trace):
        report["diagnostics"] = diagnostics(trace).to_dict()
    report["retained"] = len(trace)
    report["simulations"] = trace.simulations
    if trace.final_scales is not None:
        report["final_scales"] = [float(x) for x in trace.final_scales]
    return report


def _write_snapshot(out: Path, name: str, data: dict, seed: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(yaml.safe_dump(data, sort_keys=True), encoding="utf-8")
    (out / "seed.txt").write_text(f"{seed}\n", encoding="utf-8")


def run(cfg: RunConfig, output: str | None = None) -> int:
    """Execute a validated config; returns a process exit code."""
    out = Path(output or cfg.output)
    snapshot = cfg.to_dict()
    if cfg.source is not None and cfg.external is not None and isinstance(cfg.external.get("command"), list):
        cmd = list(cfg.external["command"])
        if cmd[-1].endswith(".py") and not Path(cmd[-1]).is_absolute():
            cmd[-1] = str((cfg.source.parent / cmd[-1]).resolve())
        snapshot["external"]["command"] = cmd
    try:
        _write_snapshot(out, "config.yaml", snapshot, cfg.seed)
        report = _execute(cfg, out)
        (out / "summary.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (InitializationError, NonPositiveDefinite) as exc:
        print(f"initialization failed: {exc}", file=sys.stderr)
        return EXIT_INIT
    except ProtocolError as exc:
        print(f"simulator protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - report anything else as a generic failure
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def load_experiment(path) -> tuple[ExperimentSpec, str]:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([f"{path}: file not found"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not well-formed YAML ({exc})"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["experiment spec must be a mapping"])
    raw = dict(raw)
    output = raw.pop("output", "experiment")
    known = set(ExperimentSpec.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError([f"{k}: unknown key" for k in unknown])
    try:
        return ExperimentSpec(**raw), output
    except (TypeError, ExperimentError) as exc:
        raise ConfigError([str(exc)]) from None


def run_experiment_cli(spec: ExperimentSpec, output: str) -> int:
    out = Path(output)
    try:
        _write_snapshot(out, "experiment.yaml", spec.to_dict(), spec.root_seed)
        result = run_experiment(spec)
        result.to_csv(out / "result.csv")
        summary = {"experiment": spec.experiment, "model": spec.model, "rows": len(result.rows)}
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="synlik", description="Bayesian synthetic likelihood and ABC samplers")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a sampler from a config file")
    p.add_argument("config")
    p.add_argument("--output", help="override the configured output directory")
    p = sub.add_parser("validate", help="check a config file and list every problem")
    p.add_argument("config")
    p = sub.add_parser("experiment", help="run a comparison experiment from a spec file")
    p.add_argument("spec")
    p.add_argument("--output", help="override the experiment file's output directory")
    p = sub.add_parser("diagnose", help="print diagnostics for a trace CSV")
    p.add_argument("trace")
    args = parser.parse_args(argv)

    if args.command == "diagnose":
        try:
            trace = Trace.from_csv(args.trace)
            print(json.dumps(diagnostics(trace).to_dict(), indent=2))
        except OSError as exc:
            print(f"I/O failure: {exc}", file=sys.stderr)
            return EXIT_IO
        except ValueError as exc:
            print(exc, file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    if args.command == "experiment":
        try:
            spec, output = load_experiment(args.spec)
        except ConfigError as exc:
            print(exc, file=sys.stderr)
            return EXIT_CONFIG
        return run_experiment_cli(spec, args.output or output)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"{args.config}: ok")
        return EXIT_OK
    return run(cfg, args.output)


if __name__ == "__main__":
    sys.exit(main())
