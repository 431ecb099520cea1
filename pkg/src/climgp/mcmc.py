"""Posterior sampling of the look-up table and GP parameters given a data segment.

One sweep updates ``beta`` and the table values ``d`` from their Gaussian full
conditionals, then moves ``(sigma2_f, sigma2_eps, r_1, r_2)`` jointly with an
additive transformation-based MCMC (TMCMC) step on the log scale.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .errors import SingularCorrelation, SingularPrecision
from .gp import (
    GpParams,
    LookupTable,
    as_rng,
    basis,
    grid_hits,
    normal_logpdf,
    scaled_times,
)

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DataSegment:
    """Observed values ``x_a..x_b`` with the known predecessor ``x_{a-1}``.

    ``first_step_marginal`` makes the first term use the GP marginal instead
    of the table conditional (only meaningful when ``t_first == 1``).
    """

    x_prev0: float
    values: np.ndarray
    t_first: int
    horizon: int
    first_step_marginal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", np.array(self.values, dtype=float).reshape(-1))

    def __len__(self):
        return len(self.values)

    @property
    def t_last(self):
        return self.t_first + len(self.values) - 1

    @property
    def inputs(self):
        if len(self.values) == 0:
            return np.empty((0, 2))
        x_prev = np.concatenate([[self.x_prev0], self.values[:-1]])
        return np.column_stack([scaled_times(self.t_first, self.t_last, self.horizon), x_prev])

    def same_as(self, other):
        return (
            self.x_prev0 == other.x_prev0
            and self.t_first == other.t_first
            and self.horizon == other.horizon
            and self.first_step_marginal == other.first_step_marginal
            and np.array_equal(self.values, other.values)
        )

    def to_dict(self):
        return {
            "x_prev0": self.x_prev0,
            "values": self.values.tolist(),
            "t_first": self.t_first,
            "horizon": self.horizon,
            "first_step_marginal": self.first_step_marginal,
        }


@dataclass(frozen=True)
class TmcmcConfig:
    scales: tuple = (0.05, 0.05, 0.05, 0.05)
    epsilon_law: object = None

    def __post_init__(self):
        if any(s <= 0 for s in self.scales):
            raise ValueError("TMCMC scales must be positive")

    def draw_epsilon(self, rng):
        if self.epsilon_law is None:
            return abs(rng.standard_normal())
        return float(self.epsilon_law(rng))


class _SegmentTerms:
    """Quantities of a data segment that depend only on ``r`` (via the table)."""

    def __init__(self, segment, table):
        X = segment.inputs
        self.n_table = len(X)
        self.marginal_row = None
        if segment.first_step_marginal and len(X):
            self.marginal_row = basis(X[:1])[0]
            self.y0 = segment.values[0]
            X = X[1:]
            y = segment.values[1:]
        else:
            y = segment.values
        self.y = y
        self.hx = basis(X) if len(X) else np.empty((0, 3))
        self.S = table.cross(X) if len(X) else np.empty((0, table.grid.n))
        self.U = self.S @ table.chol_inv.T
        self.q = np.sum(self.U * self.U, axis=1)
        self.hits = grid_hits(X, table.grid.points) if len(X) else (np.empty(0, int),) * 2
        # at a design point s' L^{-T} is exactly the matching row of L
        self.U[self.hits[0]] = table.chol[self.hits[1]]
        self.q[self.hits[0]] = 1.0


@dataclass
class ChainState:
    params: GpParams
    table: LookupTable
    log_post: float = np.nan
    terms: _SegmentTerms = field(default=None, repr=False)


def _table_logpdf(table, params):
    """log N(d; H beta, sigma2_f A)."""
    u = table.chol_inv @ (table.d - table.H @ params.beta)
    n = len(u)
    logdet = n * np.log(params.sigma2_f) + 2.0 * np.sum(np.log(np.diag(table.chol)))
    return -0.5 * (n * _LOG_2PI + logdet + u @ u / params.sigma2_f)


def _moments(terms, table, params):
    resid = table.d - table.H @ params.beta
    alpha = table.chol_inv.T @ (table.chol_inv @ resid)
    mean = terms.hx @ params.beta + terms.S @ alpha
    rows, cols = terms.hits
    mean[rows] = table.d[cols]
    var = params.sigma2_f * np.maximum(1.0 - terms.q, 0.0) + params.sigma2_eps
    return mean, var


def segment_loglik(terms, table, params):
    mean, var = _moments(terms, table, params)
    ll = float(np.sum(normal_logpdf(terms.y, mean, var)))
    if terms.marginal_row is not None:
        ll += float(normal_logpdf(terms.y0, terms.marginal_row @ params.beta,
                                  params.sigma2_f + params.sigma2_eps))
    return ll


def log_posterior(state, prior):
    """Unnormalised log posterior of the state (prior, table density, likelihood)."""
    p, t = state.params, state.table
    return prior.log_prior(p) + _table_logpdf(t, p) + segment_loglik(state.terms, t, p)


def init_state(segment, prior, grid, rng):
    rng = as_rng(rng)
    params = GpParams(prior.beta0, prior.sigma2_f_mean, np.ones(2), prior.sigma2_eps_mean)
    table = LookupTable(grid, np.zeros(grid.n), params.r)
    d = grid.H @ params.beta + np.sqrt(params.sigma2_f) * (table.chol @ rng.standard_normal(grid.n))
    table = table.with_d(d)
    state = ChainState(params, table, terms=_SegmentTerms(segment, table))
    state.log_post = log_posterior(state, prior)
    return state


def _draw_from_precision(P, b, rng):
    try:
        L = linalg.cholesky((P + P.T) / 2, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularPrecision("full-conditional precision is not positive definite") from exc
    mean = linalg.cho_solve((L, True), b)
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(len(b)), lower=False)


def beta_full_conditional(state, prior):
    """Precision matrix and linear term of the Gaussian full conditional of beta."""
    p, t, terms = state.params, state.table, state.terms
    Sb_inv = np.linalg.inv(prior.Sigma_beta0)
    LH = t.chol_inv @ t.H
    P = Sb_inv + LH.T @ LH / p.sigma2_f
    b = Sb_inv @ prior.beta0 + LH.T @ (t.chol_inv @ t.d) / p.sigma2_f
    if len(terms.y):
        W = terms.U @ t.chol_inv                      # rows w_t' = s_t' A^{-1}
        G = terms.hx - W @ t.H
        var = p.sigma2_f * np.maximum(1.0 - terms.q, 0.0) + p.sigma2_eps
        y_adj = terms.y - W @ t.d
        P = P + (G.T / var) @ G
        b = b + G.T @ (y_adj / var)
    if terms.marginal_row is not None:
        h = terms.marginal_row
        v = p.sigma2_f + p.sigma2_eps
        P = P + np.outer(h, h) / v
        b = b + h * terms.y0 / v
    return P, b


def gibbs_update_beta(state, prior, rng):
    P, b = beta_full_conditional(state, prior)
    beta = _draw_from_precision(P, b, as_rng(rng))
    params = replace(state.params, beta=beta)
    new = ChainState(params, state.table, terms=state.terms)
    new.log_post = log_posterior(new, prior)
    return new


def lookup_full_conditional(state):
    """Whitened full conditional of the table.

    With ``d = H beta + sigma_f L u`` the prior on ``u`` is standard normal;
    returns the precision and linear term for ``u``.
    """
    p, t, terms = state.params, state.table, state.terms
    n = t.grid.n
    P = np.eye(n)
    b = np.zeros(n)
    if len(terms.y):
        sf = np.sqrt(p.sigma2_f)
        var = p.sigma2_f * np.maximum(1.0 - terms.q, 0.0) + p.sigma2_eps
        # mean_t = h_t'beta + s_t'A^{-1}(d - H beta) = h_t'beta + sigma_f (L^{-1} s_t)'u
        Uw = sf * terms.U
        resid = terms.y - terms.hx @ p.beta
        P = P + (Uw.T / var) @ Uw
        b = b + Uw.T @ (resid / var)
    return P, b


def gibbs_update_lookup(state, prior, rng):
    P, b = lookup_full_conditional(state)
    u = _draw_from_precision(P, b, as_rng(rng))
    p, t = state.params, state.table
    d = t.H @ p.beta + np.sqrt(p.sigma2_f) * (t.chol @ u)
    new = ChainState(p, t.with_d(d), terms=state.terms)
    new.log_post = log_posterior(new, prior)
    return new


def tmcmc_log_move(log_theta, scales, rng, epsilon_law=None):
    """Additive TMCMC move: one shared ``eps`` with independent random signs."""
    eps = abs(rng.standard_normal()) if epsilon_law is None else float(epsilon_law(rng))
    signs = rng.choice((-1.0, 1.0), size=len(log_theta))
    return log_theta + signs * np.asarray(scales) * eps


def tmcmc_update_positive_params(state, segment, prior, cfg, rng):
    """Joint move of ``(sigma2_f, sigma2_eps, r_1, r_2)``. Returns ``(state, accepted)``."""
    rng = as_rng(rng)
    theta = state.params.positive_block()
    log_theta = np.log(theta)
    eps = cfg.draw_epsilon(rng)
    signs = rng.choice((-1.0, 1.0), size=4)
    prop_log = log_theta + signs * np.asarray(cfg.scales) * eps
    prop = np.exp(prop_log)
    params = state.params.with_positive_block(prop)
    try:
        if np.array_equal(params.r, state.table.r):
            table, terms = state.table, state.terms
        else:
            table = state.table.with_r(params.r)
            terms = _SegmentTerms(segment, table)
    except SingularCorrelation:
        return state, False
    cand = ChainState(params, table, terms=terms)
    cand.log_post = log_posterior(cand, prior)
    log_ratio = cand.log_post - state.log_post + np.sum(prop_log - log_theta)
    if np.isfinite(log_ratio) and np.log(rng.random()) < log_ratio:
        return cand, True
    return state, False


def sample_positive_tmcmc(log_density, theta0, scales, n_iter, seed=None, thin=1, epsilon_law=None):
    """Stand-alone additive TMCMC on the log scale for a density on ``(0, inf)^p``.

    ``log_density`` is the log density of ``theta`` itself; the log-scale
    Jacobian is accounted for internally.
    """
    rng = as_rng(seed)
    log_theta = np.log(np.atleast_1d(np.asarray(theta0, dtype=float)))
    lp = log_density(np.exp(log_theta))
    out = np.empty((n_iter, len(log_theta)))
    accepted = 0
    for i in range(n_iter):
        for _ in range(thin):
            prop = tmcmc_log_move(log_theta, scales, rng, epsilon_law)
            lp_prop = log_density(np.exp(prop))
            log_ratio = lp_prop - lp + np.sum(prop - log_theta)
            if np.log(rng.random()) < log_ratio:
                log_theta, lp = prop, lp_prop
                accepted += 1
        out[i] = np.exp(log_theta)
    return out, accepted / (n_iter * thin)


@dataclass(frozen=True)
class ChainOutput:
    """Retained draws after burn-in; row ``i`` of every array is one draw."""

    beta: np.ndarray
    sigma2_f: np.ndarray
    sigma2_eps: np.ndarray
    r: np.ndarray
    d: np.ndarray
    log_lik: np.ndarray
    n_total: int
    n_burnin: int
    acceptance_rates: dict
    grid: object = None
    segment: DataSegment = None
    nugget: float = None

    def __len__(self):
        return len(self.sigma2_f)

    def draw(self, i):
        params = GpParams(self.beta[i], self.sigma2_f[i], self.r[i], self.sigma2_eps[i])
        return params, self.d[i]

    def table(self, i):
        params, d = self.draw(i)
        return LookupTable(self.grid, d, params.r, self.nugget)

    def columns(self):
        cols = {
            "beta_0": self.beta[:, 0], "beta_1": self.beta[:, 1], "beta_2": self.beta[:, 2],
            "sigma2_f": self.sigma2_f, "sigma2_eps": self.sigma2_eps,
            "r_1": self.r[:, 0], "r_2": self.r[:, 1], "log_lik": self.log_lik,
        }
        for j in range(self.d.shape[1]):
            cols[f"d_{j}"] = self.d[:, j]
        return cols


def run_chain(segment, prior, grid, n_total=60000, n_burnin=10000, cfg=None, seed=None, callback=None):
    """Systematic-scan sampler: beta, table, then the TMCMC block each sweep."""
    if n_burnin > n_total:
        raise ValueError("burn-in exceeds chain length")
    cfg = cfg or TmcmcConfig()
    rng = as_rng(seed)
    state = init_state(segment, prior, grid, rng)
    keep = n_total - n_burnin
    n = grid.n
    beta = np.empty((keep, 3))
    s2f = np.empty(keep)
    s2e = np.empty(keep)
    r = np.empty((keep, 2))
    d = np.empty((keep, n))
    ll = np.empty(keep)
    accepted = 0
    for it in range(n_total):
        state = gibbs_update_beta(state, prior, rng)
        state = gibbs_update_lookup(state, prior, rng)
        state, acc = tmcmc_update_positive_params(state, segment, prior, cfg, rng)
        accepted += acc
        if it >= n_burnin:
            j = it - n_burnin
            p = state.params
            beta[j], s2f[j], s2e[j], r[j] = p.beta, p.sigma2_f, p.sigma2_eps, p.r
            d[j] = state.table.d
            ll[j] = segment_loglik(state.terms, state.table, p)
        if callback is not None:
            callback(it, state)
    rates = {
        "beta": 1.0,
        "lookup": 1.0,
        "tmcmc": accepted / n_total if n_total else 0.0,
    }
    log.debug("chain done: %d draws, TMCMC acceptance %.3f", keep, rates["tmcmc"])
    return ChainOutput(beta, s2f, s2e, r, d, ll, n_total, n_burnin, rates, grid, segment, state.table.nugget)
