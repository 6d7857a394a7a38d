import math

import numpy as np
import pytest

from synlik.core import Normal, Prior, SeedStream, Uniform
from synlik.mcmc import (
    ChainState,
    InitializationError,
    ProposalConfig,
    Trace,
    autocorrelation,
    diagnostics,
    effective_sample_size,
    laplace_logpdf,
    pm_mh_step,
    rbsl_step,
    run_chain,
    run_rbsl_chain,
)
from synlik.models import GaussianToy
from synlik.synthetic_likelihood import BslTarget, MomentEstimate, adjusted_loglik

from conftest import CountingModel

WIDE = Prior((Uniform(-100.0, 100.0),))


def gaussian_target(mu, sd):
    def target(theta, seeds):
        return -0.5 * ((theta[0] - mu) / sd) ** 2
    return target


def mcse_of_mean(x):
    ess, _ = effective_sample_size(x)
    return np.std(x, ddof=1) / math.sqrt(ess)


# -- pm_mh_step ------------------------------------------------------------------


def test_equal_loglik_always_accepts():
    state = ChainState(np.array([0.0]), -3.0, WIDE.logpdf([0.0]))
    for i in range(200):
        _, acc = pm_mh_step(state, lambda t, s: -3.0, WIDE, [0.1], SeedStream(0).child(i))
        assert acc


def test_outside_support_never_calls_target():
    prior = Prior((Uniform(0.0, 1.0),))
    calls = []

    def target(theta, seeds):
        calls.append(theta.copy())
        return 0.0

    state = ChainState(np.array([0.5]), 0.0, 0.0)
    outside = 0
    for i in range(500):
        new, acc = pm_mh_step(state, target, prior, [5.0], SeedStream(1).child(i))
        outside += not acc
    assert len(calls) == 500 - outside
    assert all(0.0 <= c[0] <= 1.0 for c in calls)
    assert outside > 300


def test_fixed_ratio_quarter_acceptance():
    state = ChainState(np.array([0.0]), 0.0, WIDE.logpdf([0.0]))
    log_quarter = math.log(0.25)
    root = SeedStream(2)
    hits = sum(pm_mh_step(state, lambda t, s: log_quarter, WIDE, [1e-3], root.child(i))[1] for i in range(100_000))
    assert abs(hits / 100_000 - 0.25) < 0.01


def test_reject_signal_is_rejection():
    from synlik.synthetic_likelihood import NonPositiveDefinite

    def target(theta, seeds):
        raise NonPositiveDefinite("singular")

    state = ChainState(np.array([0.0]), -1.0, 0.0)
    new, acc = pm_mh_step(state, target, WIDE, [0.1], SeedStream(3))
    assert not acc and new is state


def test_accepted_state_retains_new_estimate():
    state = ChainState(np.array([0.0]), -10.0, WIDE.logpdf([0.0]))
    new, acc = pm_mh_step(state, lambda t, s: -1.0, WIDE, [0.1], SeedStream(4))
    assert acc and new.loglik == -1.0 and new.theta[0] != 0.0


# -- run_chain -------------------------------------------------------------------


def test_exact_target_moments():
    mu, sd = 1.0, 0.5
    trace = run_chain([0.0], 100_000, 1000, gaussian_target(mu, sd), WIDE, ProposalConfig((1.2,), adaptation="off"), SeedStream(5))
    x = trace.theta[:, 0]
    assert abs(x.mean() - mu) < 3 * mcse_of_mean(x)
    sq = (x - mu) ** 2
    assert abs(sq.mean() - sd**2) < 3 * mcse_of_mean(sq)


def test_detailed_balance_three_states():
    trace = run_chain([0.0], 100_000, 0, gaussian_target(0.0, 1.0), WIDE, ProposalConfig((2.5,), adaptation="off"), SeedStream(6))
    bins = np.digitize(trace.theta[:, 0], [-0.5, 0.5])
    a, b = bins[:-1], bins[1:]
    for i, j in [(0, 2), (0, 1), (1, 2)]:
        nij = int(np.sum((a == i) & (b == j)))
        nji = int(np.sum((a == j) & (b == i)))
        assert nij > 500
        assert abs(nij - nji) < 3 * math.sqrt(nij + nji)


def test_zero_iterations():
    trace = run_chain([0.0], 0, 10, gaussian_target(0.0, 1.0), WIDE, ProposalConfig((1.0,)), SeedStream(7))
    assert len(trace) == 0 and trace.theta.shape == (0, 1) and trace.burn_in == 10
    with pytest.raises(ValueError, match="empty"):
        diagnostics(trace)


def test_chain_deterministic_bit_identical(tmp_path):
    model = GaussianToy(d_s=2)
    target = BslTarget(model, [0.2, 0.0], 20)
    prior = model.default_prior()
    runs = [run_chain(None, 300, 50, target, prior, ProposalConfig((0.2,)), SeedStream(8)) for _ in range(2)]
    runs[0].to_csv(tmp_path / "a.csv")
    runs[1].to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    parallel = run_chain(None, 300, 50, BslTarget(model, [0.2, 0.0], 20, workers=3), prior, ProposalConfig((0.2,)), SeedStream(8))
    assert np.array_equal(parallel.theta, runs[0].theta) and np.array_equal(parallel.loglik, runs[0].loglik)


def test_trace_flags_consistent_with_moves():
    trace = run_chain([0.0], 2000, 0, gaussian_target(0.0, 1.0), WIDE, ProposalConfig((1.0,)), SeedStream(9))
    moved = np.any(trace.theta[1:] != trace.theta[:-1], axis=1)
    assert np.array_equal(moved, trace.accepted[1:])
    assert len(trace) == 2000


def test_adaptation_frozen_after_burn_in():
    prop = ProposalConfig((10.0,))
    short = run_chain([0.0], 10, 500, gaussian_target(0.0, 1.0), WIDE, prop, SeedStream(10))
    long = run_chain([0.0], 2000, 500, gaussian_target(0.0, 1.0), WIDE, prop, SeedStream(10))
    assert short.final_scales[0] == long.final_scales[0]
    assert short.final_scales[0] < 10.0
    off = run_chain([0.0], 10, 500, gaussian_target(0.0, 1.0), WIDE, ProposalConfig((10.0,), adaptation="off"), SeedStream(10))
    assert off.final_scales[0] == 10.0


def test_adaptation_moves_toward_target():
    trace = run_chain([0.0], 5000, 5000, gaussian_target(0.0, 1.0), WIDE, ProposalConfig((50.0,)), SeedStream(11))
    assert 0.15 < trace.acceptance_rate < 0.35


def test_initialisation_falls_back_to_prior_draws():
    prior = Prior((Normal(0.0, 1.0),))

    def target(theta, seeds):
        return -math.inf if theta[0] == 0.0 else 0.0

    trace = run_chain(None, 5, 0, target, prior, ProposalConfig((0.1,)), SeedStream(12))
    assert len(trace) == 5


def test_initialisation_error_names_model_and_attempts():
    prior = Prior((Normal(0.0, 1.0),))
    with pytest.raises(InitializationError) as info:
        run_chain(None, 5, 0, lambda t, s: -math.inf, prior, ProposalConfig((0.1,)), SeedStream(13), label="toy")
    msg = str(info.value)
    assert "toy" in msg and "10 attempts" in msg and "[0.0]" in msg


def test_proposal_config_validation():
    with pytest.raises(ValueError):
        ProposalConfig((0.0,))
    with pytest.raises(ValueError):
        ProposalConfig((1.0,), adaptation="sometimes")
    with pytest.raises(ValueError):
        ProposalConfig((1.0,), target_accept=1.0)
    with pytest.raises(ValueError, match="scales"):
        run_chain(None, 5, 0, lambda t, s: 0.0, Prior((Normal(0, 1),)), ProposalConfig((0.1, 0.2)), SeedStream(0))


def test_simulation_count_and_fresh_batches():
    model = CountingModel(GaussianToy())
    target = BslTarget(model, [0.3], 10)
    trace = run_chain(None, 200, 0, target, model.default_prior(), ProposalConfig((0.05,)), SeedStream(14))
    assert trace.simulations == 10 * len(model.batches)
    assert len(model.batches) == 201  # one init plus one per in-support proposal (normal prior: all)
    seed_sets = [tuple(s) for _, s in model.batches]
    assert len(set(seed_sets)) == len(seed_sets)


def test_trace_csv_round_trip(tmp_path):
    trace = Trace(
        theta=np.array([[0.1, 1.0 / 3.0], [0.2, 2.0]]),
        loglik=np.array([-1.5, -2.0]),
        accepted=np.array([True, False]),
        burn_in=7,
        seed=1,
        gamma=np.array([[0.5], [0.25]]),
    )
    path = tmp_path / "t.csv"
    trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,accepted,loglik,theta_1,theta_2,gamma_1"
    assert lines[1].startswith("7,1,-1.5,0.1,0.3333333333333333")
    back = Trace.from_csv(path)
    assert np.array_equal(back.theta, trace.theta) and np.array_equal(back.gamma, trace.gamma)
    assert back.burn_in == 7 and np.array_equal(back.accepted, trace.accepted)


# -- robust BSL ------------------------------------------------------------------


def test_laplace_logpdf():
    assert laplace_logpdf([0.0], 0.5) == pytest.approx(-math.log(1.0))
    assert laplace_logpdf([1.0, -1.0], 2.0) == pytest.approx(2 * (-0.5 - math.log(4.0)))


def test_gamma_moves_never_accept_large_drops():
    est = MomentEstimate(np.array([0.0]), np.array([[1.0]]), 50)
    obs = np.array([0.0])
    gamma = np.zeros(1)
    ll0 = adjusted_loglik(est, obs, gamma)
    state = ChainState(np.array([0.0]), ll0, 0.0, gamma, est, obs)
    prior = Prior((Uniform(-1.0, 1.0),))
    model = CountingModel(GaussianToy())
    accepted = 0
    for i in range(2000):
        new, _, gacc = rbsl_step(state, model, obs, 50, 1e9, prior, [1e8], [1e3], SeedStream(15).child(i))
        if gacc[0]:
            accepted += 1
            assert new.loglik - ll0 > -50.0
    assert accepted < 60  # |proposal| < 10 only when |z| < 0.01


def test_gamma_updates_use_no_simulations():
    model = CountingModel(GaussianToy())
    prior = Prior((Uniform(-1.0, 1.0),))
    est = MomentEstimate(np.array([0.0]), np.array([[0.01]]), 50)
    state = ChainState(np.array([0.0]), adjusted_loglik(est, [0.0], [0.0]), 0.0, np.zeros(1), est, np.array([0.0]))
    for i in range(100):
        state, _, _ = rbsl_step(state, model, [0.0], 50, 0.5, prior, [1e8], [0.5], SeedStream(16).child(i))
    assert len(model.batches) <= 1  # theta proposals fall outside support


def test_rbsl_tiny_lambda_forces_zero():
    model = GaussianToy()
    trace = run_rbsl_chain(None, 3000, 1000, model, [0.3], 50, 1e-3, model.default_prior(), ProposalConfig((0.1,)), SeedStream(17))
    assert np.mean(np.abs(trace.gamma)) < 0.01
    assert trace.gamma.shape == (3000, 1)


def test_rbsl_matches_standard_bsl_on_well_specified_toy():
    model = GaussianToy()
    prior = model.default_prior()
    obs = [0.3]
    std = run_chain(None, 20_000, 1000, BslTarget(model, obs, 50), prior, ProposalConfig((0.1,)), SeedStream(18))
    rob = run_rbsl_chain(None, 20_000, 1000, model, obs, 50, 0.5, prior, ProposalConfig((0.1,)), SeedStream(19))
    a, b = std.theta[:, 0], rob.theta[:, 0]
    se = math.hypot(mcse_of_mean(a), mcse_of_mean(b))
    assert abs(a.mean() - b.mean()) < 3 * se


def test_rbsl_deterministic_and_validates():
    model = GaussianToy(d_s=2)
    args = (None, 100, 20, model, [0.3, 0.0], 20, 0.5, model.default_prior(), ProposalConfig((0.1,)), SeedStream(20))
    a, b = run_rbsl_chain(*args), run_rbsl_chain(*args, workers=2)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.gamma, b.gamma)
    with pytest.raises(ValueError):
        run_rbsl_chain(*args, gamma_init="random")
    with pytest.raises(ValueError):
        run_rbsl_chain(None, 10, 0, model, [0.3, 0.0], 20, 0.0, model.default_prior(), ProposalConfig((0.1,)), SeedStream(0))


def test_rbsl_gamma_zero_init_option():
    model = GaussianToy()
    trace = run_rbsl_chain(None, 1, 0, model, [0.3], 20, 0.5, model.default_prior(), ProposalConfig((1e-9,)), SeedStream(21), gamma_scale=1e-12, gamma_init="zero")
    assert abs(trace.gamma[0, 0]) < 1e-9


# -- diagnostics -----------------------------------------------------------------


def _trace(x, accepted=None):
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    acc = np.zeros(len(x), dtype=bool) if accepted is None else accepted
    return Trace(theta=x, loglik=np.zeros(len(x)), accepted=acc, burn_in=0, seed=0)


def test_constant_chain():
    d = diagnostics(_trace(np.full(500, 2.0)))
    assert d.acceptance_rate == 0.0 and d.ess[0] == 1.0 and d.sd[0] == 0.0


def test_iid_chain_ess():
    x = np.random.default_rng(22).standard_normal(10_000)
    d = diagnostics(_trace(x))
    assert 8000 <= d.ess[0] <= 12000
    np.testing.assert_allclose(d.quantiles[:, 0], np.quantile(x, [0.025, 0.5, 0.975]))


def test_alternating_chain():
    x = np.tile([1.0, -1.0], 500)
    rho = autocorrelation(x)
    assert rho[1] == pytest.approx(-1.0, abs=1e-12)
    ess, k = effective_sample_size(x)
    assert k == 0
    assert math.isfinite(ess) and ess >= len(x)


def test_ar1_ess_matches_theory():
    rng = np.random.default_rng(23)
    phi, n = 0.9, 200_000
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    ess, _ = effective_sample_size(x)
    expected = n * (1 - phi) / (1 + phi)
    assert abs(ess / expected - 1) < 0.15


def test_diagnostics_dict_fields():
    x = np.random.default_rng(24).standard_normal(1000)
    t = _trace(x)
    t.gamma = x.reshape(-1, 1) * 2
    out = diagnostics(t).to_dict()
    assert set(out) >= {"acceptance_rate", "ess", "mean", "sd", "q025", "q500", "q975", "mcse", "gamma"}
