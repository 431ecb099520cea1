"""K-dimensional dynamics: matrix-normal look-up table and ensemble posteriors.

The vector process ``x_t = f(t, x_{t-1}) + eps_t`` has ``f`` a K-variate GP
with mean ``B' h(z)`` and separable covariance ``c(z1, z2) Sigma_f``, so the
table ``D`` (one row per grid point) is matrix normal ``MN(H B, A, Sigma_f)``.
Every quantity reduces to its univariate counterpart at ``K = 1``.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, stats

from . import kernels
from .errors import CholeskyFailure, InputError, SingularCorrelation, StaleCache
from .gp import (
    JITTER,
    THIN_STRIDE,
    as_rng,
    basis,
    build_design_grid,
    factor_correlation,
    grid_hits,
    scaled_times,
)
from .posteriors import PosteriorPathDraws, select_draws

log = logging.getLogger(__name__)

MV_VALUE_RANGE = (-5.0, 5.0)
FUNCTIONALS = ("mean", "max")
RIDGE = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MvGpParams:
    B: np.ndarray           # (K+2, K)
    Sigma_f: np.ndarray     # (K, K)
    Sigma_eps: np.ndarray   # (K, K)
    r: np.ndarray           # (K+1,)

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        K = B.shape[1]
        if B.shape[0] != K + 2:
            raise ValueError(f"B must be {K + 2}x{K}, got {B.shape}")
        Sf = np.asarray(self.Sigma_f, dtype=float).reshape(K, K)
        Se = np.asarray(self.Sigma_eps, dtype=float).reshape(K, K)
        r = np.asarray(self.r, dtype=float).reshape(K + 1)
        if np.any(r <= 0):
            raise ValueError("smoothness parameters must be positive")
        for name, S in (("Sigma_f", Sf), ("Sigma_eps", Se)):
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise CholeskyFailure(f"{name} is not positive definite") from None
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Sigma_f", Sf)
        object.__setattr__(self, "Sigma_eps", Se)
        object.__setattr__(self, "r", r)

    @property
    def K(self):
        return self.B.shape[1]

    @classmethod
    def from_univariate(cls, params):
        return cls(params.beta[:, None], [[params.sigma2_f]], [[params.sigma2_eps]], params.r)


def build_mv_grid(K, n=50, value_range=MV_VALUE_RANGE, seed=0, horizon=250):
    """Time column as in the univariate grid plus K value columns over ``value_range``."""
    return build_design_grid(n, value_range, seed, horizon, dims=K)


@dataclass(frozen=True)
class MvLookupTable:
    grid: object
    D: np.ndarray
    r: np.ndarray
    nugget: float = JITTER
    corr: np.ndarray = field(default=None, repr=False)
    chol: np.ndarray = field(default=None, repr=False)
    chol_inv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "D", np.array(self.D, dtype=float).reshape(self.grid.n, -1))
        if self.corr is None:
            A, L, Linv = factor_correlation(self.grid.points, r, self.nugget)
            object.__setattr__(self, "corr", A)
            object.__setattr__(self, "chol", L)
            object.__setattr__(self, "chol_inv", Linv)

    @property
    def H(self):
        return self.grid.H

    @property
    def corr_inv(self):
        return self.chol_inv.T @ self.chol_inv

    def with_D(self, D):
        return replace(self, D=np.array(D, dtype=float))

    def with_r(self, r):
        return MvLookupTable(self.grid, self.D, r, self.nugget)

    def check(self, params):
        if not np.array_equal(self.r, params.r):
            raise StaleCache(f"table cached for r={self.r}, params have r={params.r}")

    def cross(self, X):
        return kernels.cross_corr(np.atleast_2d(X), self.grid.points, self.r, nugget=self.nugget)


def mv_lookup_prior(grid, params, nugget=JITTER):
    """Matrix-normal moments of the table: ``(H B, A, Sigma_f)``."""
    A, _, _ = factor_correlation(grid.points, params.r, nugget)
    return grid.H @ params.B, A, params.Sigma_f


def vectorize_moments(mean, row_cov, col_cov):
    """Moments of the row-stacked table ``(f(z_1)', ..., f(z_n)')'``."""
    return mean.reshape(-1), np.kron(row_cov, col_cov)


def mv_lookup_conditional_on_first_step(grid, params, x0, f10, t1=None, nugget=JITTER):
    """Table moments given ``f`` at the first input ``(t1, x0)``."""
    if t1 is None:
        t1 = 1.0 / grid.horizon
    A, _, _ = factor_correlation(grid.points, params.r, nugget)
    z = np.concatenate([[t1], np.atleast_1d(x0)])[None]
    s = kernels.cross_corr(z, grid.points, params.r, nugget=nugget)[0]
    h = basis(z)[0]
    mean = grid.H @ params.B + np.outer(s, np.atleast_1d(f10) - h @ params.B)
    return mean, A - np.outer(s, s), params.Sigma_f


def mv_conditional_moments(X, table, params, include_noise=True):
    """Means ``(L, K)`` and covariances ``(L, K, K)`` for inputs ``X`` of shape ``(L, K+1)``."""
    table.check(params)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    S = table.cross(X)
    U = S @ table.chol_inv.T
    resid = table.D - table.H @ params.B
    alpha = table.chol_inv.T @ (table.chol_inv @ resid)
    mean = basis(X) @ params.B + S @ alpha
    c = np.maximum(1.0 - np.sum(U * U, axis=1), 0.0)
    rows, cols = grid_hits(X, table.grid.points)
    mean[rows], c[rows] = table.D[cols], 0.0
    cov = c[:, None, None] * params.Sigma_f
    if include_noise:
        cov = cov + params.Sigma_eps
    return mean, cov


def mv_one_step_conditional(x_prev, t_next, table, params, include_noise=True):
    X = np.concatenate([[t_next], np.atleast_1d(x_prev)])[None]
    mean, cov = mv_conditional_moments(X, table, params, include_noise)
    return mean[0], cov[0]


def mv_simulate_path(x0, t_range, table, params, seed=None):
    """Draw ``x_a..x_b`` (rows) given the K-vector ``x_{a-1} = x0``."""
    table.check(params)
    a, b = t_range
    rng = as_rng(seed)
    t_next = scaled_times(a, b, table.grid.horizon)
    K = params.K
    noise = rng.standard_normal((1, len(t_next), K))
    return kernels.simulate_mv_paths(
        np.atleast_1d(np.asarray(x0, dtype=float)), t_next, table.grid.points, params.r[None],
        params.B[None], table.D[None], params.Sigma_f[None], params.Sigma_eps[None],
        noise, nugget=table.nugget,
    )[0]


def sample_matrix_normal(mean, row_cov, col_cov, size=None, seed=None):
    """Draws ``mean + L_row Z L_col'`` with ``Z`` standard normal."""
    rng = as_rng(seed)
    Lr = np.linalg.cholesky(row_cov)
    Lc = np.linalg.cholesky(col_cov)
    shape = mean.shape if size is None else (size,) + mean.shape
    Z = rng.standard_normal(shape)
    return mean + Lr @ Z @ Lc.T


def matrix_normal_logpdf(X, mean, row_chol_inv, row_logdet, col_cov):
    """Log density of ``MN(mean, row, col)`` given the inverse Cholesky factor of ``row``."""
    n, K = X.shape
    W = row_chol_inv @ (X - mean)
    Lc = np.linalg.cholesky(col_cov)
    V = linalg.solve_triangular(Lc, W.T, lower=True)
    col_logdet = 2.0 * np.sum(np.log(np.diag(Lc)))
    return float(-0.5 * (n * K * _LOG_2PI + K * row_logdet + n * col_logdet + np.sum(V * V)))


# ---------------------------------------------------------------------------
# data, priors and likelihood
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MvDataSegment:
    """Rows ``x_a..x_b`` of a K-dimensional series with known predecessor row."""

    x_prev0: np.ndarray
    values: np.ndarray
    t_first: int
    horizon: int

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "x_prev0", np.asarray(self.x_prev0, dtype=float).reshape(v.shape[1]))

    def __len__(self):
        return self.values.shape[0]

    @property
    def K(self):
        return self.values.shape[1]

    @property
    def t_last(self):
        return self.t_first + len(self) - 1

    @property
    def inputs(self):
        prev = np.vstack([self.x_prev0[None], self.values[:-1]])
        return np.column_stack([scaled_times(self.t_first, self.t_last, self.horizon), prev])

    def to_dict(self):
        return {
            "x_prev0": self.x_prev0.tolist(),
            "values": self.values.tolist(),
            "t_first": self.t_first,
            "horizon": self.horizon,
        }


@dataclass(frozen=True)
class MvPriorConfig:
    B0: np.ndarray
    row_cov: np.ndarray
    psi: float
    nu_f: float
    nu_eps: float
    Sigma_f0: np.ndarray
    Sigma_eps0: np.ndarray
    mu_r: float = -0.5
    sigma2_r: float = 1.0

    def __post_init__(self):
        K = np.atleast_2d(self.B0).shape[1]
        if not (self.nu_f > K - 1 and self.nu_eps > K - 1):
            raise ValueError("inverse-Wishart degrees of freedom must exceed K - 1")

    @property
    def K(self):
        return np.atleast_2d(self.B0).shape[1]

    def log_prior(self, params):
        lp = stats.matrix_normal.logpdf(
            params.B, self.B0, self.row_cov, self.psi * params.Sigma_f
        )
        lp += stats.invwishart.logpdf(params.Sigma_f, df=self.nu_f, scale=self.Sigma_f0)
        lp += stats.invwishart.logpdf(params.Sigma_eps, df=self.nu_eps, scale=self.Sigma_eps0)
        logr = np.log(params.r)
        lp += np.sum(stats.norm.logpdf(logr, self.mu_r, np.sqrt(self.sigma2_r)) - logr)
        return float(lp)

    def to_dict(self):
        return {
            "B0": np.asarray(self.B0).tolist(),
            "row_cov": np.asarray(self.row_cov).tolist(),
            "psi": self.psi,
            "nu_f": self.nu_f,
            "nu_eps": self.nu_eps,
            "Sigma_f0": np.asarray(self.Sigma_f0).tolist(),
            "Sigma_eps0": np.asarray(self.Sigma_eps0).tolist(),
            "mu_r": self.mu_r,
            "sigma2_r": self.sigma2_r,
        }


def derive_mv_prior_config(series, stride=THIN_STRIDE, psi=1.0, mu_r=-0.5, sigma2_r=1.0):
    """Intercept row from the thinned means, inverse-Wishart scales ``Sigma_hat / 2``."""
    X = np.column_stack([np.asarray(getattr(s, "x", s), dtype=float)[::stride] for s in series])
    if X.shape[0] < 2:
        raise InputError("series too short after thinning")
    K = X.shape[1]
    B0 = np.zeros((K + 2, K))
    B0[0] = X.mean(axis=0)
    S_hat = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    S_hat = _ensure_pd(S_hat)
    return MvPriorConfig(B0, np.eye(K + 2), psi, float(K), float(K), S_hat / 2, S_hat / 2, mu_r, sigma2_r)


def _ensure_pd(S, rel=RIDGE):
    """Add a ridge to a singular empirical covariance (collinear series)."""
    ridge = rel * max(float(np.mean(np.diag(S))), np.finfo(float).tiny)
    # a Cholesky test alone lets round-off pivots of exactly collinear series through
    if np.linalg.eigvalsh(S)[0] > ridge:
        return S
    log.warning("empirical covariance is singular; adding ridge %.3g", ridge)
    return S + ridge * np.eye(len(S))


class _MvTerms:
    """Segment quantities that depend on ``r`` only."""

    def __init__(self, segment, table):
        X = segment.inputs
        self.Y = segment.values
        self.Hx = basis(X)
        self.S = table.cross(X)
        self.U = self.S @ table.chol_inv.T
        self.c = np.maximum(1.0 - np.sum(self.U * self.U, axis=1), 0.0)
        self.hits = grid_hits(X, table.grid.points)
        self.c[self.hits[0]] = 0.0
        self.logdet_A = 2.0 * np.sum(np.log(np.diag(table.chol)))


def mv_segment_loglik(terms, table, params):
    """Sum of K-variate one-step log densities.

    ``c_t Sigma_f + Sigma_eps`` are diagonalised simultaneously, so each step
    costs O(K^2) after one O(K^3) eigendecomposition.
    """
    resid = table.D - table.H @ params.B
    alpha = table.chol_inv.T @ (table.chol_inv @ resid)
    mean = terms.Hx @ params.B + terms.S @ alpha
    rows, cols = terms.hits
    mean[rows] = table.D[cols]
    E = terms.Y - mean
    Ce = np.linalg.cholesky(params.Sigma_eps)
    Ci = linalg.solve_triangular(Ce, np.eye(params.K), lower=True)
    lam, V = np.linalg.eigh(Ci @ params.Sigma_f @ Ci.T)
    lam = np.maximum(lam, 0.0)
    Yt = E @ Ci.T @ V
    den = terms.c[:, None] * lam[None, :] + 1.0
    logdet_e = 2.0 * np.sum(np.log(np.diag(Ce)))
    L, K = E.shape
    return float(-0.5 * (L * K * _LOG_2PI + L * logdet_e + np.sum(np.log(den)) + np.sum(Yt * Yt / den)))


def mv_path_log_likelihood(segment, table, params):
    table.check(params)
    return mv_segment_loglik(_MvTerms(segment, table), table, params)


# ---------------------------------------------------------------------------
# sampler
# ---------------------------------------------------------------------------

def chol_jacobian_log(C):
    """``log |d(CC')/dC|`` for lower-triangular ``C`` with positive diagonal."""
    K = C.shape[0]
    i = np.arange(1, K + 1)
    return float(K * np.log(2.0) + np.sum((K - i + 1) * np.log(np.diag(C))))


def pack_cholesky(C):
    """Free coordinates of a Cholesky factor: log-diagonal, then the strict lower part."""
    K = C.shape[0]
    rows, cols = np.tril_indices(K, -1)
    return np.concatenate([np.log(np.diag(C)), C[rows, cols]])


def unpack_cholesky(theta, K):
    C = np.zeros((K, K))
    C[np.diag_indices(K)] = np.exp(theta[:K])
    rows, cols = np.tril_indices(K, -1)
    C[rows, cols] = theta[K:]
    return C


def cholesky_coord_log_jacobian(C):
    """Log Jacobian from the free coordinates to ``Sigma = CC'``."""
    return chol_jacobian_log(C) + float(np.sum(np.log(np.diag(C))))


def sample_cov_tmcmc(log_density, Sigma0, scale, n_iter, seed=None, thin=1):
    """Additive TMCMC on the Cholesky coordinates of a covariance matrix.

    ``log_density`` is the log density of ``Sigma`` itself.
    """
    rng = as_rng(seed)
    K = Sigma0.shape[0]
    C = np.linalg.cholesky(Sigma0)
    theta = pack_cholesky(C)
    lp = log_density(C @ C.T) + cholesky_coord_log_jacobian(C)
    out = np.empty((n_iter, K, K))
    acc = 0
    for i in range(n_iter):
        for _ in range(thin):
            eps = abs(rng.standard_normal())
            prop = theta + rng.choice((-1.0, 1.0), size=len(theta)) * scale * eps
            Cp = unpack_cholesky(prop, K)
            lpp = log_density(Cp @ Cp.T) + cholesky_coord_log_jacobian(Cp)
            if np.log(rng.random()) < lpp - lp:
                theta, lp, C = prop, lpp, Cp
                acc += 1
        out[i] = C @ C.T
    return out, acc / max(n_iter * thin, 1)


@dataclass(frozen=True)
class MvChainConfig:
    n_total: int = 10000
    n_burnin: int = 2000
    scales: dict = None
    adapt: bool = True
    target_accept: float = 0.3


_BLOCKS = ("B", "D", "r", "Sigma_f", "Sigma_eps")
_WINDOW = 50
_DEFAULT_SCALES = {"B": 0.1, "D": 0.05, "r": 0.05, "Sigma_f": 0.05, "Sigma_eps": 0.05}


@dataclass
class _MvState:
    params: MvGpParams
    table: MvLookupTable
    terms: _MvTerms
    log_post: float = np.nan


def _mv_log_post(state, prior):
    p, t = state.params, state.table
    lp = prior.log_prior(p)
    lp += matrix_normal_logpdf(t.D, t.H @ p.B, t.chol_inv, state.terms.logdet_A, p.Sigma_f)
    lp += mv_segment_loglik(state.terms, t, p)
    return lp


@dataclass(frozen=True)
class MvChainOutput:
    B: np.ndarray
    Sigma_f: np.ndarray
    Sigma_eps: np.ndarray
    r: np.ndarray
    D: np.ndarray
    log_lik: np.ndarray
    n_total: int
    n_burnin: int
    acceptance_rates: dict
    pd_failures: int
    grid: object = None
    segment: MvDataSegment = None
    nugget: float = JITTER

    def __len__(self):
        return self.B.shape[0]

    @property
    def K(self):
        return self.B.shape[2]

    def draw(self, i):
        return MvGpParams(self.B[i], self.Sigma_f[i], self.Sigma_eps[i], self.r[i]), self.D[i]

    def table(self, i):
        return MvLookupTable(self.grid, self.D[i], self.r[i], self.nugget)


class _Sampler:
    def __init__(self, segment, prior, grid, cfg, rng):
        self.segment, self.prior, self.grid, self.cfg, self.rng = segment, prior, grid, cfg, rng
        self.scales = dict(_DEFAULT_SCALES)
        self.scales.update(cfg.scales or {})
        self.accepted = dict.fromkeys(_BLOCKS, 0)
        self.tried = dict.fromkeys(_BLOCKS, 0)
        self.pd_failures = 0
        self.K = segment.K
        self.m = self.K + 2

    def init_state(self):
        pr = self.prior
        params = MvGpParams(pr.B0, pr.Sigma_f0, pr.Sigma_eps0, np.ones(self.K + 1))
        table = MvLookupTable(self.grid, np.zeros((self.grid.n, self.K)), params.r)
        Lf = np.linalg.cholesky(params.Sigma_f)
        D = table.H @ params.B + table.chol @ self.rng.standard_normal((self.grid.n, self.K)) @ Lf.T
        table = table.with_D(D)
        st = _MvState(params, table, _MvTerms(self.segment, table))
        st.log_post = _mv_log_post(st, self.prior)
        return st

    def _signs(self, shape):
        return self.rng.choice((-1.0, 1.0), size=shape)

    def _accept(self, block, state, cand, log_jac=0.0):
        self.tried[block] += 1
        try:
            cand.log_post = _mv_log_post(cand, self.prior)
        except (np.linalg.LinAlgError, CholeskyFailure, SingularCorrelation, ValueError):
            self.pd_failures += 1
            return state
        ratio = cand.log_post - state.log_post + log_jac
        if np.isfinite(ratio) and np.log(self.rng.random()) < ratio:
            self.accepted[block] += 1
            return cand
        return state

    def move_B(self, st):
        # moves are shaped by the prior row and column scales, which keeps them symmetric
        p = st.params
        Lf = np.linalg.cholesky(p.Sigma_f)
        eps = abs(self.rng.standard_normal())
        delta = self.scales["B"] * eps * self._signs((self.m, self.K)) @ Lf.T
        cand = _MvState(replace(p, B=p.B + delta), st.table, st.terms)
        return self._accept("B", st, cand)

    def move_D(self, st):
        p, t = st.params, st.table
        Lf = np.linalg.cholesky(p.Sigma_f)
        eps = abs(self.rng.standard_normal())
        delta = t.chol @ (self.scales["D"] * eps * self._signs((self.grid.n, self.K))) @ Lf.T
        cand = _MvState(p, t.with_D(t.D + delta), st.terms)
        return self._accept("D", st, cand)

    def move_r(self, st):
        p, t = st.params, st.table
        eps = abs(self.rng.standard_normal())
        log_r = np.log(p.r)
        prop = log_r + self.scales["r"] * eps * self._signs(len(log_r))
        r = np.exp(prop)
        try:
            table = t.with_r(r)
        except SingularCorrelation:
            self.tried["r"] += 1
            self.pd_failures += 1
            return st
        cand = _MvState(replace(p, r=r), table, _MvTerms(self.segment, table))
        return self._accept("r", st, cand, float(np.sum(prop - log_r)))

    def move_cov(self, st, which):
        p = st.params
        C = np.linalg.cholesky(getattr(p, which))
        theta = pack_cholesky(C)
        eps = abs(self.rng.standard_normal())
        prop = theta + self.scales[which] * eps * self._signs(len(theta))
        Cp = unpack_cholesky(prop, self.K)
        try:
            cand_params = replace(p, **{which: Cp @ Cp.T})
        except CholeskyFailure:
            self.tried[which] += 1
            self.pd_failures += 1
            return st
        log_jac = cholesky_coord_log_jacobian(Cp) - cholesky_coord_log_jacobian(C)
        return self._accept(which, st, _MvState(cand_params, st.table, st.terms), log_jac)

    def sweep(self, st):
        st = self.move_B(st)
        st = self.move_D(st)
        st = self.move_r(st)
        st = self.move_cov(st, "Sigma_f")
        st = self.move_cov(st, "Sigma_eps")
        return st

    def adapt(self, it):
        # windowed acceptance rates steer the log scales; burn-in only
        if not self.cfg.adapt or it % _WINDOW:
            return
        for b in _BLOCKS:
            if self.tried[b]:
                rate = self.accepted[b] / self.tried[b]
                self.scales[b] *= np.exp(2.0 * (rate - self.cfg.target_accept))
        self.accepted = dict.fromkeys(_BLOCKS, 0)
        self.tried = dict.fromkeys(_BLOCKS, 0)


def mv_run_chain(segment, prior, grid, config=None, seed=None):
    """Additive TMCMC over all blocks; scales adapt during burn-in only."""
    cfg = config or MvChainConfig()
    if cfg.n_burnin > cfg.n_total:
        raise ValueError("burn-in exceeds chain length")
    rng = as_rng(seed)
    smp = _Sampler(segment, prior, grid, cfg, rng)
    st = smp.init_state()
    keep = max(cfg.n_total - cfg.n_burnin, 0)
    K, n = segment.K, grid.n
    K_plus = K + 2
    N = keep if cfg.n_total else 1
    B = np.empty((N, K_plus, K))
    Sf = np.empty((N, K, K))
    Se = np.empty((N, K, K))
    r = np.empty((N, K + 1))
    D = np.empty((N, n, K))
    ll = np.empty(N)

    def record(j, s):
        B[j], Sf[j], Se[j], r[j], D[j] = s.params.B, s.params.Sigma_f, s.params.Sigma_eps, s.params.r, s.table.D
        ll[j] = mv_segment_loglik(s.terms, s.table, s.params)

    if cfg.n_total == 0:
        record(0, st)
    for it in range(cfg.n_total):
        st = smp.sweep(st)
        if it < cfg.n_burnin:
            smp.adapt(it + 1)
            if it + 1 == cfg.n_burnin:
                smp.accepted = dict.fromkeys(_BLOCKS, 0)
                smp.tried = dict.fromkeys(_BLOCKS, 0)
        else:
            record(it - cfg.n_burnin, st)
    rates = {b: (smp.accepted[b] / smp.tried[b] if smp.tried[b] else 0.0) for b in _BLOCKS}
    log.debug("mv chain done: acceptance %s, %d PD failures", rates, smp.pd_failures)
    return MvChainOutput(B, Sf, Se, r, D, ll, cfg.n_total, cfg.n_burnin, rates,
                         smp.pd_failures, grid, segment, st.table.nugget)


# ---------------------------------------------------------------------------
# ensemble posteriors
# ---------------------------------------------------------------------------

def ensemble_inverse_posterior(x0, T0, chain, functional="mean", M=None, seed=None, origin_year=0):
    """K-dimensional trajectories from ``x0 * 1_K`` reduced by a componentwise functional."""
    if functional not in FUNCTIONALS:
        raise InputError(f"functional must be one of {FUNCTIONALS}, got {functional!r}")
    paths = simulate_mv_inverse(x0, T0, chain, M, seed)
    reduced = paths.mean(axis=2) if functional == "mean" else paths.max(axis=2)
    return PosteriorPathDraws(reduced, np.arange(1, T0 + 1), f"ensemble-{functional}", origin_year)


def simulate_mv_inverse(x0, T0, chain, M=None, seed=None):
    """Raw ``(M, T0, K)`` trajectories for indices ``1..T0``."""
    idx = select_draws(len(chain), M)
    rng = as_rng(seed)
    K = chain.K
    t_next = scaled_times(1, T0, chain.grid.horizon)
    noise = rng.standard_normal((len(idx), T0, K))
    x_start = np.full(K, float(x0)) if np.ndim(x0) == 0 else np.asarray(x0, dtype=float)
    return kernels.simulate_mv_paths(
        x_start, t_next, chain.grid.points, chain.r[idx], chain.B[idx], chain.D[idx],
        chain.Sigma_f[idx], chain.Sigma_eps[idx], noise, nugget=chain.nugget,
    )
