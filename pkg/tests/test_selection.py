import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from climgp import gp, mcmc
from climgp import selection as sl
from climgp.errors import EmptyChain, EmptyGrid, InputError, NonFiniteMarginal, OutOfRange
from climgp.ingest import LogTempSeries, build_aligned_dataset

from conftest import synthetic_path


def chain_from_draws(params, tables, segment):
    M = len(params)
    return mcmc.ChainOutput(
        np.array([p.beta for p in params]), np.array([p.sigma2_f for p in params]),
        np.array([p.sigma2_eps for p in params]), np.array([p.r for p in params]),
        np.array([t.d for t in tables]), np.zeros(M), M, 0, {"tmcmc": 0.0},
        tables[0].grid, segment, gp.JITTER,
    )


def _random_draws(rng, M, g):
    params, tables = [], []
    for _ in range(M):
        p = gp.GpParams(rng.normal(size=3) * 0.2 + [0.6, 0.1, 0.7], rng.uniform(0.01, 0.1),
                        rng.uniform(0.5, 2.0, 2), rng.uniform(0.01, 0.05))
        params.append(p)
        tables.append(gp.LookupTable(g, g.H @ p.beta + rng.normal(0, 0.1, g.n), p.r))
    return params, tables


# -- marginal density ------------------------------------------------------

def test_marginal_single_step_single_draw(rng):
    g = gp.build_design_grid(6, seed=1, horizon=30)
    seg = mcmc.DataSegment(2.0, [2.1], 12, 30)
    params, tables = _random_draws(rng, 1, g)
    ch = chain_from_draws(params, tables, seg)
    m, v = gp.one_step_conditional(2.0, 12 / 30, tables[0], params[0])
    expected = stats.norm.logpdf(2.1, m, np.sqrt(v))
    assert sl.estimate_log_marginal(ch, seg, recompute=True) == pytest.approx(expected, rel=1e-10)


def test_marginal_of_equal_draws(rng):
    g = gp.build_design_grid(6, seed=1, horizon=30)
    seg = mcmc.DataSegment(2.0, [2.1, 2.05], 12, 30)
    params, tables = _random_draws(rng, 1, g)
    one = chain_from_draws(params, tables, seg)
    two = chain_from_draws(params * 2, tables * 2, seg)
    assert sl.estimate_log_marginal(two, seg, recompute=True) == pytest.approx(
        sl.estimate_log_marginal(one, seg, recompute=True), rel=1e-13)


def test_marginal_direct_product(rng):
    g = gp.build_design_grid(8, seed=2, horizon=30)
    seg = mcmc.DataSegment(2.0, [2.1, 2.05, 2.2], 12, 30)
    params, tables = _random_draws(rng, 100, g)
    ch = chain_from_draws(params, tables, seg)
    total = 0.0
    for p, t in zip(params, tables):
        prod, prev = 1.0, seg.x_prev0
        for j, y in enumerate(seg.values):
            m, v = gp.one_step_conditional(prev, (12 + j) / 30, t, p)
            prod *= np.exp(-0.5 * (y - m) ** 2 / v) / np.sqrt(2 * np.pi * v)
            prev = y
        total += prod
    assert sl.estimate_log_marginal(ch, seg, recompute=True) == pytest.approx(np.log(total / 100), rel=1e-10)
    with pytest.raises(EmptyChain):
        sl.estimate_log_marginal(chain_from_draws(params, tables, seg), seg, n=0, recompute=True)


def test_marginal_reuses_stored_loglik():
    x, g = synthetic_path(T=30, n=10)
    seg = mcmc.DataSegment(x[15], x[16:], 16, 31)
    prior = gp.PriorConfig([x.mean(), 0, 0], np.eye(3), 4.01, 0.002, 4.01, 0.002)
    ch = mcmc.run_chain(seg, prior, g, 80, 20, seed=0)
    assert sl.estimate_log_marginal(ch) == pytest.approx(sl.estimate_log_marginal(ch, recompute=True), rel=1e-9)
    lm = sl.estimate_log_marginal_prior(seg, prior, g, n=200, seed=1)
    assert np.isfinite(lm)


# -- mixture Gibbs ---------------------------------------------------------

def test_equal_marginals_are_symmetric():
    post = sl.gibbs_zeta_p([-3.0, -3.0], n_iter=40_000, n_burn=1000, seed=1)
    se = np.sqrt(0.25 / 40_000) * 3  # generous for autocorrelation
    assert abs(post.zeta_prob[0] - 0.5) < 4 * se
    assert set(np.unique(post.zeta_draws)) == {1, 2}


def test_p_given_zeta_is_dirichlet():
    post = sl.gibbs_zeta_p([-1e3, 0.0, -1e3], n_iter=20_000, n_burn=0, seed=2)
    assert np.all(post.zeta_draws == 2)
    np.testing.assert_allclose(post.p_draws.mean(axis=0), [0.25, 0.5, 0.25], atol=0.01)
    assert stats.kstest(post.p_draws[:, 1], stats.beta(2, 2).cdf).pvalue > 1e-3


def test_dominant_marginal_matches_collapsed_form():
    lm = np.array([0.0, np.log(1e3), 0.0])
    post = sl.gibbs_zeta_p(lm, n_iter=100_000, n_burn=10_000, seed=3)
    np.testing.assert_allclose(post.zeta_prob, sl.collapsed_zeta_posterior(lm), atol=0.01)


def test_gibbs_rejects_bad_marginals():
    with pytest.raises(NonFiniteMarginal):
        sl.gibbs_zeta_p([0.0, np.inf])
    with pytest.raises(NonFiniteMarginal):
        sl.gibbs_zeta_p([])


def test_gibbs_is_deterministic():
    a = sl.gibbs_zeta_p([0.0, 1.0, 2.0], n_iter=500, n_burn=10, seed=5)
    b = sl.gibbs_zeta_p([0.0, 1.0, 2.0], n_iter=500, n_burn=10, seed=5)
    np.testing.assert_array_equal(a.zeta_draws, b.zeta_draws)
    assert len(a.zeta_draws) == 500


# -- decisions ---------------------------------------------------------------

def test_alternative_probability():
    assert sl.alternative_probability(0.4, 0.9) == pytest.approx(0.64)
    assert sl.alternative_probability(1.0, 1.0) == 0.0
    assert sl.alternative_probability(0.0, 0.37) == 1.0
    with pytest.raises(OutOfRange):
        sl.alternative_probability(1.2, 0.5)


@given(st.floats(0, 1), st.floats(0, 1))
def test_v_bounds(z, q):
    v = sl.alternative_probability(z, q)
    assert 1 - z <= v + 1e-15 and v <= 1.0


def test_decision_examples():
    np.testing.assert_array_equal(sl.optimal_decision([0.9, 0.2, 0.7], 0.5), [1, 0, 1])
    np.testing.assert_array_equal(sl.optimal_decision([0.9, 0.2, 0.7], 0.9), [0, 0, 0])
    np.testing.assert_array_equal(sl.optimal_decision([0.5], 0.5), [0])


def brute_decision(v, beta):
    best, best_val = None, -np.inf
    for d in itertools.product((0, 1), repeat=len(v)):
        val = sum(dk * (vk - beta) for dk, vk in zip(d, v))
        # strict improvement keeps the earlier (more zeros) vector on ties
        if val > best_val + 1e-15:
            best, best_val = d, val
    return np.array(best)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.floats(0.001, 0.999))
def test_threshold_equals_enumeration(v, beta):
    np.testing.assert_array_equal(sl.optimal_decision(v, beta), brute_decision(v, beta))


def test_cfdr_cfnr_examples():
    assert sl.cfdr_cfnr([1, 0, 1], [0.9, 0.2, 0.7]) == (pytest.approx(0.2), pytest.approx(0.2))
    assert sl.cfdr_cfnr([1, 1, 1], [0.9, 0.2, 0.7])[1] == 0.0
    assert sl.cfdr_cfnr([0, 0, 0], [0.9, 0.2, 0.7]) == (0.0, pytest.approx(0.6))
    with pytest.raises(ValueError):
        sl.cfdr_cfnr([1, 0], [0.5])


def test_curve_examples():
    c = sl.decision_curve([0.9, 0.2, 0.7])
    assert c.best_model == 2 and not c.tie
    assert c.threshold == pytest.approx(0.2) and c.first_jump == c.threshold
    assert len(c.beta_grid) == 199 and c.beta_grid[0] == 0.005 and c.beta_grid[-1] == 0.995
    tied = sl.decision_curve([0.4, 0.4, 0.4])
    assert tied.best_model == 1 and tied.tie
    with pytest.raises(EmptyGrid):
        sl.decision_curve([0.5], [])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=10))
def test_curve_properties(v):
    v = np.array(v)
    c = sl.decision_curve(v)
    step = c.beta_grid[1] - c.beta_grid[0]
    assert abs(c.first_jump - v.min()) <= step + 1e-12
    assert np.all(np.diff(c.decisions, axis=0) <= 0)
    assert np.all(np.diff(c.cfnr) >= -1e-12)
    # cFDR only changes across some v_k
    for j in np.flatnonzero(np.abs(np.diff(c.cfdr)) > 1e-12):
        lo, hi = c.beta_grid[j], c.beta_grid[j + 1]
        assert np.any((v > lo) & (v <= hi))


def test_inclusion_probability():
    ref = np.arange(10.0)
    assert sl.inclusion_probability(ref, 2.0, 0.0, 3.0) == pytest.approx(0.4)


# -- orchestration -----------------------------------------------------------

QUICK = sl.SelectionConfig(n_total=200, n_burnin=50, grid_n=15, gibbs_iter=2000, gibbs_burn=100, n_paths=100, workers=1)


def _dataset(models):
    x, _ = synthetic_path()
    obs = LogTempSeries(2000, x[:41], "obs")
    return build_aligned_dataset(obs, [LogTempSeries(2020, m, f"m{k}") for k, m in enumerate(models, 1)])


def test_identical_models_are_flagged():
    x, _ = synthetic_path()
    rep = sl.run_selection(_dataset([x[20:], x[20:]]), QUICK)
    assert rep.indistinguishable["s1"] and rep.indistinguishable["s2"]
    d = rep.to_dict()
    assert d["K"] == 2 and set(d["best_model"]) == {"s1", "s2"}
    assert len(d["curves"]["s1"]) == 199
    assert [r["model"] for r in rep.gof_table()] == [1, 2]


def test_single_model_rejected():
    x, _ = synthetic_path()
    with pytest.raises(InputError):
        sl.run_selection(_dataset([x[20:]]), QUICK)


def test_selection_deterministic_and_pool_agnostic():
    x, _ = synthetic_path()
    ds = _dataset([x[20:] + 0.05, x[20:]])
    a = sl.run_selection(ds, QUICK).to_dict()
    from dataclasses import replace

    b = sl.run_selection(ds, replace(QUICK, workers=2)).to_dict()
    assert a == b
