import math

import numpy as np
import pytest

from conftest import REFERENCE_STATS, data_with_means
from smi.diagnostics import diagnostics
from smi.errors import ContractError
from smi.gaussian import gaussian_data, smi_posterior_moments
from smi.mcmc import ChainConfig, SampleMatrix, nested_smi_sampler, run_stage2, rw_metropolis_chain, with_seed
from smi.stationarity import metropolis_matrix, stationary_distribution


def std_normal(x):
    return -0.5 * float(x @ x)


@pytest.fixture
def reference_data():
    z, y = data_with_means(25, 50, REFERENCE_STATS.z_bar, REFERENCE_STATS.y_bar)
    return gaussian_data(z, y)


def test_normal_target_moments():
    cfg = ChainConfig(n1=20_000, burnin=1000, proposal_scales=(2.4,), seed=1)
    chain = rw_metropolis_chain(std_normal, [0.0], cfg)
    x = chain.draws[:, 0]
    tau = diagnostics(chain).iact[0]
    assert abs(x.mean()) < 4 * math.sqrt(tau / x.size)
    assert x.var() == pytest.approx(1.0, rel=0.1)
    assert 0.0 < chain.accept_rate < 1.0


def test_tiny_proposals_are_always_accepted():
    chain = rw_metropolis_chain(std_normal, [0.3], ChainConfig(n1=2000, burnin=0, proposal_scales=(1e-7,)))
    assert chain.accept_rate > 0.999


def test_piecewise_constant_target_occupancy():
    weights = np.array([1.0, 3.0, 0.5, 2.0, 1.5])
    exact = stationary_distribution(metropolis_matrix(weights / weights.sum()))

    def target(x):
        k = math.floor(x[0])
        return math.log(weights[k]) if 0 <= k < weights.size else -math.inf

    chain = rw_metropolis_chain(target, [1.5], ChainConfig(n1=40_000, burnin=1000, proposal_scales=(1.5,), seed=2))
    states = np.floor(chain.draws[:, 0]).astype(int)
    for k, p in enumerate(exact):
        indicator = (states == k).astype(float)
        ess = diagnostics(indicator).ess[0]
        se = math.sqrt(p * (1 - p) / ess)
        assert abs(indicator.mean() - p) < 3 * se


def test_initial_point_must_be_in_support():
    with pytest.raises(ContractError):
        rw_metropolis_chain(lambda x: -math.inf, [0.0], ChainConfig())


def test_all_rejected_chain_is_flagged():
    def spike(x):
        return 0.0 if x[0] == 0.0 else -math.inf

    chain = rw_metropolis_chain(spike, [0.0], ChainConfig(n1=50, burnin=0, proposal_scales=(1.0,)))
    assert chain.accept_rate == 0.0
    assert "all proposals rejected" in chain.warnings


def test_scale_dimension_is_checked():
    with pytest.raises(ContractError):
        rw_metropolis_chain(std_normal, [0.0, 0.0, 0.0], ChainConfig(proposal_scales=(1.0, 1.0)))


def test_config_validation():
    for bad in ({"n2": 0}, {"thin": 0}, {"burnin": -1}, {"proposal_scales": (0.0,)}, {"stage2_mode": "eager"}):
        with pytest.raises(ContractError):
            ChainConfig(**bad)
    assert ChainConfig(burnin=10, n1=5, thin=3).n_iter == 25


def test_chain_is_deterministic():
    cfg = ChainConfig(n1=500, burnin=100, proposal_scales=(1.0, 0.5), seed=99)
    a = rw_metropolis_chain(std_normal, [0.0, 0.0], cfg)
    b = rw_metropolis_chain(std_normal, [0.0, 0.0], cfg)
    np.testing.assert_array_equal(a.draws, b.draws)
    c = rw_metropolis_chain(std_normal, [0.0, 0.0], with_seed(cfg, 100))
    assert not np.array_equal(a.draws, c.draws)


def test_tuning_reaches_target_acceptance():
    cfg = ChainConfig(n1=5000, burnin=0, proposal_scales=(50.0, 50.0), tune=3000, seed=4)
    chain = rw_metropolis_chain(std_normal, [0.0, 0.0], cfg)
    assert 0.15 < chain.accept_rate < 0.55
    assert "tuned_scales" in chain.meta


def test_sample_matrix_csv_roundtrip(tmp_path):
    samples = SampleMatrix(np.array([[0.1, 2.0], [1 / 3, -4.5]]), ["phi", "theta"], 7, 0.25,
                           {"eta": 0.5, "stage2_mode": "warm"})
    path = samples.to_csv(tmp_path / "draws.csv")
    assert path.read_text().splitlines()[0] == "phi,theta"
    back = SampleMatrix.from_csv(path)
    np.testing.assert_array_equal(back.draws, samples.draws)
    assert back.names == samples.names and back.seed == 7 and back.meta["eta"] == 0.5


def test_sample_matrix_rejects_nan():
    with pytest.raises(ContractError):
        SampleMatrix(np.array([[np.nan]]), ["x"], 0, 0.5)


def _check_against_closed_form(samples, hyper, eta, k=3.0):
    post = smi_posterior_moments(REFERENCE_STATS, hyper, eta)
    draws = samples.draws[:, [0, 2]]  # phi, theta
    ess = diagnostics(draws).ess
    mean = draws.mean(axis=0)
    assert np.all(np.abs(mean - post.mean[:2]) < k * np.sqrt(np.diag(post.cov)[:2] / ess))
    var = draws.var(axis=0, ddof=1)
    assert np.all(np.abs(var - np.diag(post.cov)[:2]) < k * np.diag(post.cov)[:2] * np.sqrt(2 / ess))


def test_warm_nested_sampler_matches_closed_form(hyper, model, reference_data):
    cfg = ChainConfig(n1=1500, n2=200, burnin=1000, thin=4, proposal_scales=(0.3, 0.3), seed=12)
    samples = nested_smi_sampler(model, reference_data, 0.5, cfg)
    assert samples.names == ["phi", "theta_tilde", "theta"]
    assert samples.meta["stage2_mode"] == "warm"
    _check_against_closed_form(samples, hyper, 0.5)


def test_parallel_nested_sampler_full_bayes(hyper, model, reference_data):
    cfg = ChainConfig(n1=3000, n2=300, burnin=1000, thin=4, proposal_scales=(0.3, 0.3), seed=13,
                      stage2_mode="parallel")
    samples = nested_smi_sampler(model, reference_data, 1.0, cfg)
    assert samples.meta["stage2_mode"] == "parallel"
    _check_against_closed_form(samples, hyper, 1.0)


def test_single_step_subchains_are_biased(hyper, model, reference_data):
    base = dict(n1=2000, burnin=500, thin=2, proposal_scales=(0.3, 0.3), seed=5, stage2_mode="parallel")
    bad = nested_smi_sampler(model, reference_data, 0.0, ChainConfig(n2=1, **base), init_theta=[8.0])
    good = nested_smi_sampler(model, reference_data, 0.0, ChainConfig(n2=500, **base), init_theta=[8.0])
    exact = smi_posterior_moments(REFERENCE_STATS, hyper, 0.0).mean[1]
    assert abs(good.column("theta").mean() - exact) < 0.05
    assert abs(bad.column("theta").mean() - exact) > 1.0


def test_stage2_uses_no_module_one_information(model, reference_data):
    calls = []

    def log_z_lik(phi, z):
        calls.append(1)
        return model.log_z_lik(phi, z)

    from dataclasses import replace

    counting = replace(model, log_z_lik=log_z_lik)
    cfg = ChainConfig(n1=200, n2=20, burnin=50, proposal_scales=(0.3, 0.3), seed=8)
    samples = nested_smi_sampler(counting, reference_data, 0.5, cfg)
    before = len(calls)
    phis = samples.draws[:, :1]
    rng = np.random.default_rng(np.random.SeedSequence(8).spawn(2)[1])
    thetas, _ = run_stage2(counting, phis, reference_data.y, cfg, np.array([0.3]), np.zeros(1), rng)
    assert len(calls) == before
    np.testing.assert_array_equal(thetas[:, 0], samples.column("theta"))


def test_stage2_is_identical_under_replaced_z(model, reference_data):
    cfg = ChainConfig(n1=200, n2=20, burnin=50, proposal_scales=(0.3, 0.3), seed=8, stage2_mode="parallel")
    samples = nested_smi_sampler(model, reference_data, 0.5, cfg)
    phis = samples.draws[:, :1]
    out = []
    for _ in range(2):
        rng = np.random.default_rng(np.random.SeedSequence(8).spawn(2)[1])
        out.append(run_stage2(model, phis, reference_data.y, cfg, np.array([0.3]), np.zeros(1), rng)[0])
    np.testing.assert_array_equal(out[0], out[1])
    np.testing.assert_array_equal(out[0][:, 0], samples.column("theta"))


def test_nested_sampler_is_deterministic(model, reference_data):
    cfg = ChainConfig(n1=300, n2=30, burnin=100, proposal_scales=(0.3, 0.3), seed=21)
    a = nested_smi_sampler(model, reference_data, 0.7, cfg)
    b = nested_smi_sampler(model, reference_data, 0.7, cfg)
    np.testing.assert_array_equal(a.draws, b.draws)
    assert a.meta == b.meta


def test_zero_acceptance_subchains_are_flagged(model, reference_data):
    cfg = ChainConfig(n1=50, n2=3, burnin=10, proposal_scales=(0.3, 0.3), stage2_scales=(1e4,), seed=2)
    samples = nested_smi_sampler(model, reference_data, 0.5, cfg)
    assert samples.meta["stage2_zero_accept"] > 0
    assert any("stage-2" in w for w in samples.warnings)


def test_stage1_scale_count_is_checked(model, reference_data):
    with pytest.raises(ContractError):
        nested_smi_sampler(model, reference_data, 0.5, ChainConfig(proposal_scales=(0.1, 0.1, 0.1)))


def test_error_shrinks_with_effective_sample_size(hyper, model, reference_data):
    exact = smi_posterior_moments(REFERENCE_STATS, hyper, 0.5).mean[0]

    def rms_error(n1):
        errors, ess = [], []
        for seed in range(6):
            cfg = ChainConfig(n1=n1, n2=100, burnin=500, thin=2, proposal_scales=(0.3, 0.3), seed=seed,
                              stage2_mode="parallel")
            phi = nested_smi_sampler(model, reference_data, 0.5, cfg).column("phi")
            errors.append(phi.mean() - exact)
            ess.append(diagnostics(phi).ess[0])
        return math.sqrt(np.mean(np.square(errors))), np.mean(ess)

    small, ess_small = rms_error(1000)
    large, ess_large = rms_error(10_000)
    assert large <= 2.0 * small * math.sqrt(ess_small / ess_large)
