import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from climgp import gp, kernels
from climgp.errors import DegenerateRange, NonPositiveSmoothness, SeriesTooShort, StaleCache
from climgp.ingest import LogTempSeries

from conftest import random_params


def brute_corr(points, r, nugget=gp.JITTER):
    n = len(points)
    A = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            A[i, j] = gp.corr_kernel(points[i], points[j], r)
    return A + nugget * np.eye(n)


def straight_line_moments(x_star, grid, d, p, include_noise=True):
    """Textbook GP predictive moments, written out without any package helper."""
    A = brute_corr(grid.points, p.r)
    s = np.array([gp.corr_kernel(x_star, z, p.r) for z in grid.points])
    hit = np.all(grid.points == x_star, axis=1)
    s = s + gp.JITTER * hit
    h = np.r_[1.0, x_star]
    H = np.column_stack([np.ones(grid.n), grid.points])
    w = np.linalg.solve(A, s)
    mean = h @ p.beta + w @ (d - H @ p.beta)
    var = p.sigma2_f * max(1.0 - s @ w, 0.0)
    return mean, var + (p.sigma2_eps if include_noise else 0.0)


# -- kernel ----------------------------------------------------------------

def test_kernel_examples():
    z = gp.InputPoint(0.3, 2.0)
    assert gp.corr_kernel(z, z, [5.0, 0.1]) == 1.0
    assert gp.corr_kernel([1.0, 0.0], [0.0, 0.0], [1.0, 1.0]) == pytest.approx(0.3678794, abs=1e-7)
    assert gp.corr_kernel([1.0, 1.0], [0.0, 0.0], [0.5, 2.0]) == pytest.approx(0.0820850, abs=1e-7)
    with pytest.raises(NonPositiveSmoothness):
        gp.corr_kernel(z, z, [1.0, 0.0])


coord = st.floats(-10, 10, allow_nan=False)


@given(st.tuples(coord, coord), st.tuples(coord, coord), st.tuples(st.floats(0.01, 100), st.floats(0.01, 100)))
def test_kernel_symmetric_and_bounded(a, b, r):
    k = gp.corr_kernel(a, b, r)
    assert k == gp.corr_kernel(b, a, r)
    assert 0.0 <= k <= 1.0


def test_input_point_validation():
    assert gp.InputPoint.from_index(50, 2.0, horizon=250).t_scaled == 0.2
    with pytest.raises(ValueError):
        gp.InputPoint(1.0, 2.0)


# -- design grid -----------------------------------------------------------

def test_grid_examples():
    g = gp.build_design_grid(2, seed=4)
    t = np.sort(g.points[:, 0])
    assert 0 <= t[0] < 0.5 <= t[1] < 1
    d = gp.build_design_grid()
    assert d.n == 50 and d.value_range == (0.0, 5.0)
    np.testing.assert_array_equal(gp.build_design_grid(seed=9).points, gp.build_design_grid(seed=9).points)
    with pytest.raises(DegenerateRange):
        gp.build_design_grid(5, value_range=(1.0, 1.0))


@given(st.integers(2, 80), st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_grid_is_latin(n, seed, dims):
    g = gp.build_design_grid(n, (-5.0, 5.0), seed, dims=dims)
    bins_t = np.floor(g.points[:, 0] * n).astype(int)
    assert sorted(bins_t) == list(range(n))
    for j in range(1, dims + 1):
        bins = np.floor((g.points[:, j] + 5.0) / 10.0 * n).astype(int)
        assert sorted(np.clip(bins, 0, n - 1)) == list(range(n))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 50), st.integers(0, 1000), st.floats(0.01, 100), st.floats(0.01, 100))
def test_correlation_factorizes(n, seed, r1, r2):
    g = gp.build_design_grid(n, seed=seed)
    A, L, Linv = gp.factor_correlation(g.points, [r1, r2])
    np.testing.assert_allclose(L @ L.T, A, atol=1e-10)


# -- priors ----------------------------------------------------------------

def test_prior_from_series():
    c = np.log(14.0)
    series = LogTempSeries(0, [c - 0.1, 9, 9, 9, 9, c + 0.1])
    pr = gp.derive_prior_config(series)
    a = 0.01
    assert pr.gamma_f == pytest.approx(0.0201) and pr.gamma_eps == pytest.approx(0.0201)
    assert pr.alpha_f == 4.01 and pr.mu_r == -0.5 and pr.sigma2_r == 1.0
    np.testing.assert_allclose(pr.beta0, [c, 0, 0])
    np.testing.assert_array_equal(pr.Sigma_beta0, np.eye(3))
    shape, scale = pr.alpha_f / 2, pr.gamma_f / 2
    ig_var = scale**2 / ((shape - 1) ** 2 * (shape - 2))
    assert ig_var == pytest.approx(200 * a**2, rel=1e-10)
    assert np.exp(pr.mu_r + pr.sigma2_r / 2) == pytest.approx(1.0)
    with pytest.raises(SeriesTooShort):
        gp.derive_prior_config(LogTempSeries(0, [1.0, 2.0]))


def test_prior_sample_matches_moments():
    pr = gp.PriorConfig([1.0, 0.0, 0.0], np.eye(3), 10.0, 8.0, 10.0, 8.0)
    rng = np.random.default_rng(0)
    s2f = np.array([pr.sample(rng).sigma2_f for _ in range(20000)])
    assert s2f.mean() == pytest.approx(pr.sigma2_f_mean, rel=0.03)


def test_inverse_gamma_density_normalised():
    from scipy import integrate

    val, _ = integrate.quad(lambda s: np.exp(gp.inv_gamma_logpdf(s, 4.01, 0.0201)), 0, np.inf, limit=200)
    assert val == pytest.approx(1.0, abs=1e-6)


# -- table moments ---------------------------------------------------------

def test_lookup_prior_moments(rng):
    g1 = gp.build_design_grid(2, seed=1)
    g1 = gp.DesignGrid(g1.points[:1])
    p = random_params(rng)
    mean, cov = gp.lookup_prior_moments(g1, p)
    assert mean[0] == pytest.approx(np.r_[1.0, g1.points[0]] @ p.beta)
    assert cov[0, 0] == pytest.approx(p.sigma2_f, rel=1e-6)
    p0 = gp.GpParams(np.zeros(3), 1.0, [1.0, 1.0], 1.0)
    np.testing.assert_array_equal(gp.lookup_prior_moments(gp.build_design_grid(5), p0)[0], 0.0)
    g3 = gp.build_design_grid(3, seed=7)
    _, cov3 = gp.lookup_prior_moments(g3, p)
    np.testing.assert_allclose(cov3, p.sigma2_f * brute_corr(g3.points, p.r), rtol=1e-13)


def test_conditional_on_first_step(rng):
    g = gp.build_design_grid(6, seed=2)
    p = random_params(rng)
    x0 = 2.5
    h = np.array([1.0, 1.0 / g.horizon, x0])
    m, _ = gp.lookup_conditional_on_first_step(g, p, x0, h @ p.beta)
    np.testing.assert_allclose(m, g.H @ p.beta, atol=1e-14)
    mean_far, cov_far = gp.lookup_conditional_on_first_step(g, p, 1e6, 3.0)
    m0, c0 = gp.lookup_prior_moments(g, p)
    np.testing.assert_allclose(mean_far, m0)
    np.testing.assert_allclose(cov_far, c0)


def test_conditional_on_first_step_two_point_hand_case():
    g = gp.DesignGrid(np.array([[0.2, 1.0], [0.6, 2.0]]), horizon=10)
    p = gp.GpParams([0.5, 1.0, 0.3], 2.0, [1.0, 0.5], 0.1)
    x0, f10 = 1.5, 0.9
    z = (0.1, 1.5)
    s1 = np.exp(-(1.0 * 0.1**2 + 0.5 * 0.5**2))
    s2 = np.exp(-(1.0 * 0.5**2 + 0.5 * 0.5**2))
    a12 = np.exp(-(1.0 * 0.4**2 + 0.5 * 1.0))
    hz = 0.5 + 1.0 * z[0] + 0.3 * z[1]
    resid = f10 - hz
    mean_hand = [0.5 + 0.2 + 0.3 + s1 * resid, 0.5 + 0.6 + 0.6 + s2 * resid]
    jit = 1.0 + gp.JITTER
    cov_hand = 2.0 * np.array([[jit - s1 * s1, a12 - s1 * s2], [a12 - s1 * s2, jit - s2 * s2]])
    mean, cov = gp.lookup_conditional_on_first_step(g, p, x0, f10)
    np.testing.assert_allclose(mean, mean_hand, rtol=1e-13)
    np.testing.assert_allclose(cov, cov_hand, rtol=1e-12)


# -- one-step conditional -------------------------------------------------

def _table(rng, n=12, seed=0):
    g = gp.build_design_grid(n, seed=seed)
    p = random_params(rng)
    d = g.H @ p.beta + rng.normal(0, 0.3, n)
    return g, p, gp.LookupTable(g, d, p.r)


def test_grid_hit_and_far_input(rng):
    g, p, tab = _table(rng)
    for i in range(g.n):
        m, v = gp.one_step_conditional(g.points[i, 1], g.points[i, 0], tab, p)
        assert v == pytest.approx(p.sigma2_eps, abs=1e-10)
        assert m == pytest.approx(tab.d[i], abs=1e-8)
    m, v = gp.one_step_conditional(1e4, 0.5, tab, p)
    assert m == pytest.approx(np.array([1.0, 0.5, 1e4]) @ p.beta)
    assert v == pytest.approx(p.sigma2_f + p.sigma2_eps)


def test_single_point_table_hand_case():
    g = gp.DesignGrid(np.array([[0.4, 2.0]]))
    p = gp.GpParams([0.3, -0.2, 0.9], 0.5, [2.0, 0.7], 0.01)
    tab = gp.LookupTable(g, [2.2], p.r)
    x_star = (0.5, 2.5)
    c = np.exp(-(2.0 * 0.01 + 0.7 * 0.25))
    h = lambda z: 0.3 - 0.2 * z[0] + 0.9 * z[1]
    a = 1.0 + gp.JITTER
    m, v = gp.one_step_conditional(2.5, 0.5, tab, p)
    assert m == pytest.approx(h(x_star) + c / a * (2.2 - h((0.4, 2.0))), rel=1e-13)
    assert v == pytest.approx(0.5 * (1 - c * c / a) + 0.01, rel=1e-13)


def test_matches_straight_line_oracle(rng):
    for k in range(20):
        g, p, tab = _table(rng, n=8, seed=k)
        x_star = np.array([rng.uniform(0, 1), rng.uniform(0, 5)])
        for noise in (True, False):
            m, v = gp.one_step_conditional(x_star[1], x_star[0], tab, p, include_noise=noise)
            mo, vo = straight_line_moments(x_star, g, tab.d, p, noise)
            assert m == pytest.approx(mo, rel=1e-9, abs=1e-9)
            assert v == pytest.approx(vo, rel=1e-7, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_variance_bound(seed):
    rng = np.random.default_rng(seed)
    g, p, tab = _table(rng, n=15, seed=seed % 97)
    X = np.column_stack([rng.uniform(0, 1, 50), rng.uniform(-1, 6, 50)])
    _, v = gp.conditional_moments(X, tab, p, include_noise=False)
    assert np.all(v >= 0) and np.all(v <= p.sigma2_f * (1 + 1e-12))


def test_stale_cache(rng):
    g, p, tab = _table(rng)
    other = gp.GpParams(p.beta, p.sigma2_f, p.r * 1.1, p.sigma2_eps)
    with pytest.raises(StaleCache):
        gp.one_step_conditional(2.0, 0.5, tab, other)


def test_cache_coherence(rng):
    g, p, tab = _table(rng, n=20)
    tab2 = tab.with_r([0.7, 2.2])
    np.testing.assert_allclose(tab2.corr_inv @ tab2.corr, np.eye(g.n), atol=1e-8)


# -- simulation and likelihood ---------------------------------------------

def test_near_zero_variance_path_follows_means(rng):
    g, p, tab = _table(rng)
    p0 = gp.GpParams(p.beta, 1e-300, p.r, 1e-300)
    tab0 = gp.LookupTable(g, tab.d, p.r)
    path = gp.simulate_path(2.0, (5, 12), tab0, p0, seed=1)
    x = 2.0
    for j, t in enumerate(range(5, 13)):
        x, _ = gp.one_step_conditional(x, t / g.horizon, tab0, p0)
        assert path[j] == pytest.approx(x, abs=1e-12)


def test_path_deterministic(rng):
    g, p, tab = _table(rng)
    a = gp.simulate_path(2.0, (1, 30), tab, p, seed=5)
    np.testing.assert_array_equal(a, gp.simulate_path(2.0, (1, 30), tab, p, seed=5))
    b = gp.simulate_path(2.0, (1, 30), tab, p, seed=5, first_step="marginal")
    assert b.shape == (30,)


def test_one_step_draws_match_moments(rng):
    g, p, tab = _table(rng, n=8)
    M = 100_000
    t_next = np.array([0.3])
    noise = np.random.default_rng(2).standard_normal((M, 1))
    draws = kernels.simulate_paths(
        2.1, t_next, g.points, np.tile(p.r, (M, 1)), np.tile(p.beta, (M, 1)), np.tile(tab.d, (M, 1)),
        np.full(M, p.sigma2_f), np.full(M, p.sigma2_eps), noise, nugget=tab.nugget,
    )[:, 0]
    m, v = gp.one_step_conditional(2.1, 0.3, tab, p)
    assert abs(draws.mean() - m) < 4 * np.sqrt(v / M)


def test_loglik_examples(rng):
    g, p, tab = _table(rng)
    m, v = gp.one_step_conditional(2.0, 3 / g.horizon, tab, p)
    assert gp.path_log_likelihood(2.0, [m], 3, tab, p) == pytest.approx(-0.5 * np.log(2 * np.pi * v))
    seg = [2.1, 2.3]
    m1, v1 = gp.one_step_conditional(2.0, 3 / g.horizon, tab, p)
    m2, v2 = gp.one_step_conditional(2.1, 4 / g.horizon, tab, p)
    both = gp.normal_logpdf(2.1, m1, v1) + gp.normal_logpdf(2.3, m2, v2)
    assert gp.path_log_likelihood(2.0, seg, 3, tab, p) == pytest.approx(both, rel=1e-13)


def test_loglik_first_step_marginal(rng):
    g, p, tab = _table(rng)
    seg = [2.1, 2.3, 2.2]
    h = np.array([1.0, 1.0 / g.horizon, 2.0])
    first = gp.normal_logpdf(2.1, h @ p.beta, p.sigma2_f + p.sigma2_eps)
    rest = gp.path_log_likelihood(2.1, seg[1:], 2, tab, p)
    assert gp.path_log_likelihood(2.0, seg, 1, tab, p) == pytest.approx(first + rest, rel=1e-13)


def test_loglik_straight_line_oracle(rng):
    for k in range(10):
        g, p, tab = _table(rng, n=7, seed=k)
        seg = rng.uniform(0.5, 4.5, 5)
        prev = np.r_[1.7, seg[:-1]]
        total = 0.0
        for j, (xp, y) in enumerate(zip(prev, seg)):
            m, v = straight_line_moments(np.array([(10 + j) / g.horizon, xp]), g, tab.d, p)
            total += -0.5 * (np.log(2 * np.pi * v) + (y - m) ** 2 / v)
        assert gp.path_log_likelihood(1.7, seg, 10, tab, p) == pytest.approx(total, rel=1e-8)
