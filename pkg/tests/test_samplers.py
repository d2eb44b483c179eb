import numpy as np
import pytest
from scipy import stats as sps

from h22cascade.cascade import grow_paths
from h22cascade.hier_graph import HierParams, WeightedGraph, build_level_graph
from h22cascade.samplers import (MIGParams, MetropolisUSampler, PinnedEdgeLaw, RngStream,
                                 as_generator, laplace_closed_form, laplace_mc, log_u_density,
                                 sample_beta_direct, sample_gamma_half, sample_u_mcmc)
from h22cascade.schrodinger import beta_from_u
from h22cascade.stats import ig_cdf, ks_statistic, two_sample_test, ward_identity_test


def exact_level0_beta(N, rng, wbar=1.0, rho=2.0):
    """Independent draws on {1, delta}: u_1 from the 1-D law, gamma ~ Gamma(1/2)."""
    p = HierParams(wbar, rho, 0)
    g = build_level_graph(p)
    law = PinnedEdgeLaw(g.weights[0, 1])
    u = np.zeros((N, 2))
    u[:, 0] = law.sample(rng, N)
    return beta_from_u(g, u, sample_gamma_half(rng, N), 1)


def test_rng_stream_reproducible():
    a = RngStream(5, 2).generator().random(10)
    b = RngStream(5, 2).generator().random(10)
    c = RngStream(5, 3).generator().random(10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert RngStream(5, 2).child(1) != RngStream(5, 2).child(2)
    assert isinstance(as_generator(3), np.random.Generator)


def test_gamma_half_moments():
    x = sample_gamma_half(np.random.default_rng(1), 1_000_000)
    se = x.std() / np.sqrt(len(x))
    assert abs(x.mean() - 0.5) < 3 * se
    sq = (x - x.mean()) ** 2
    assert abs(sq.mean() - 0.5) < 3 * sq.std() / np.sqrt(len(x))


def test_gamma_half_laplace_footnote():
    # G = 1/(2 gamma): E exp(-kappa^2 G / 2) = e^{-kappa}
    g = sample_gamma_half(np.random.default_rng(2), 1_000_000)
    vals = np.exp(-1.0 / (4.0 * g))
    assert abs(vals.mean() - np.exp(-1.0)) < 3 * vals.std() / np.sqrt(len(vals))


def test_laplace_closed_form_examples(level1):
    assert laplace_closed_form(MIGParams(level1), np.zeros(3)) == 1.0
    single = WeightedGraph(np.zeros((1, 1)))
    assert laplace_closed_form(MIGParams(single), np.array([3.0])) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        laplace_closed_form(MIGParams(level1), np.array([-1.0, 0, 0]))
    with pytest.raises(ValueError):
        MIGParams(level1, theta=np.full(3, 2.0))


def test_pinned_edge_law_is_inverse_gaussian():
    # the u_1 density on {1, delta}, integrated numerically, against scipy's IG(mean 1, shape a)
    for wbar, rho in [(1.0, 2.0), (0.3, 2.0), (2.0, 1.5)]:
        p = HierParams(wbar, rho, 0)
        law = PinnedEdgeLaw(wbar / (2 * (rho - 1)))
        assert law.mass == pytest.approx(1.0, abs=1e-8)
        x = np.exp(np.linspace(-6, 4, 200))
        np.testing.assert_allclose(law.cdf(np.log(x)), ig_cdf(p)(x), atol=1e-7)


def test_laplace_mc_trivial_cases(rng):
    sampler = lambda N, r: exact_level0_beta(N, r)
    est, se = laplace_mc(sampler, np.zeros(2), 1000, rng)
    assert est == 1.0 and se == 0.0
    with pytest.raises(ValueError):
        laplace_mc(sampler, np.ones(2), 10, rng)


def test_laplace_mc_level0_oracle():
    g = build_level_graph(HierParams(1.0, 2.0, 0))
    sampler = lambda N, r: exact_level0_beta(N, r)
    lam = np.array([1.0, 0.0])
    est, se = laplace_mc(sampler, lam, 1_000_000, np.random.default_rng(4))
    assert abs(est - laplace_closed_form(MIGParams(g), lam)) < 3 * se


def test_laplace_mc_se_scaling():
    sampler = lambda N, r: exact_level0_beta(N, r)
    lam = np.array([0.5, 0.5])
    _, se_small = laplace_mc(sampler, lam, 10_000, np.random.default_rng(5))
    _, se_big = laplace_mc(sampler, lam, 1_000_000, np.random.default_rng(6))
    assert se_small / se_big == pytest.approx(10.0, rel=0.1)


def test_mcmc_level0_matches_quadrature():
    g = build_level_graph(HierParams(1.0, 2.0, 0))
    u = sample_u_mcmc(g, 1, 300, np.random.default_rng(7), n_chains=100_000)
    law = PinnedEdgeLaw(g.weights[0, 1])
    assert ks_statistic(u[:, 0], law.cdf) < 0.01


def test_mcmc_level1_mean_one_and_ward():
    g = build_level_graph(HierParams(1.0, 2.0, 1))
    sampler = MetropolisUSampler(g, 2, n_chains=20_000, burn_in=400)
    u = sampler.run(np.random.default_rng(8))[:, 0]
    assert np.all((sampler.acceptance[:2] > 0.25) & (sampler.acceptance[:2] < 0.55))
    for i in range(2):
        e = np.exp(u[:, i])
        assert abs(e.mean() - 1.0) < 3 * e.std() / np.sqrt(len(e))
        assert ward_identity_test(u[:, i], 0.3).passed


def test_mcmc_reproducible():
    g = build_level_graph(HierParams(1.0, 2.0, 1))
    a = sample_u_mcmc(g, 2, 50, RngStream(1, 1).generator(), n_chains=10)
    b = sample_u_mcmc(g, 2, 50, RngStream(1, 1).generator(), n_chains=10)
    np.testing.assert_array_equal(a, b)


def test_mcmc_single_chain_shape():
    g = build_level_graph(HierParams(1.0, 2.0, 1))
    u = sample_u_mcmc(g, 2, 20, np.random.default_rng(0))
    assert u.shape == (3,) and u[2] == 0.0
    with pytest.raises(ValueError):
        sample_u_mcmc(g, 2, 0, np.random.default_rng(0))


def test_log_u_density_two_vertex():
    g = build_level_graph(HierParams(1.0, 2.0, 0))
    law = PinnedEdgeLaw(g.weights[0, 1])
    u = np.linspace(-3, 3, 7)
    full = np.stack([u, np.zeros_like(u)], axis=1)
    diff = log_u_density(g, full, 1) - law.log_pdf(u)
    np.testing.assert_allclose(diff, diff[0], atol=1e-12)


def test_beta_direct_level0_and_positivity():
    g = build_level_graph(HierParams(1.0, 2.0, 0))
    beta = sample_beta_direct(g, 1, 300, np.random.default_rng(9), n_chains=10_000)
    H = np.zeros((len(beta), 2, 2))
    H[:, 0, 0], H[:, 1, 1] = 2 * beta[:, 0], 2 * beta[:, 1]
    H[:, 0, 1] = H[:, 1, 0] = -g.weights[0, 1]
    assert np.all(np.linalg.eigvalsh(H) > 0)
    vals = np.exp(-beta[:, 0])
    exact = laplace_closed_form(MIGParams(g), np.array([1.0, 0.0]))
    assert abs(vals.mean() - exact) < 3 * vals.std() / np.sqrt(len(vals))


def test_beta_direct_level1_matches_cascade():
    p = HierParams(1.0, 2.0, 0)
    g = build_level_graph(p.with_level(1))
    beta = sample_beta_direct(g, 2, 400, np.random.default_rng(10), n_chains=10_000)
    _, cb, _ = grow_paths(p, 1, 10_000, np.random.default_rng(11))
    assert two_sample_test(beta[:, 0], cb[:, 1]).passed
