"""Univariate Gaussian-process emulator of one-step dynamics.

The unknown transition ``x_t = f(t, x_{t-1}) + eps_t`` is modelled with a GP
on the two-dimensional input ``(scaled time, previous value)``. A finite
realisation of the GP on a design grid (the look-up table) is carried as an
auxiliary variable, so every one-step conditional shares one cached inverse.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import kernels
from .errors import (
    DegenerateRange,
    NonFiniteLikelihood,
    NonPositiveSmoothness,
    SeriesTooShort,
    SingularCorrelation,
    StaleCache,
)
from .ingest import thin_series

#: Diagonal jitter added to correlation matrices (and to exact grid hits).
JITTER = 1e-7
DEFAULT_HORIZON = 250
DEFAULT_VALUE_RANGE = (0.0, 5.0)
THIN_STRIDE = 5
_LOG_2PI = np.log(2.0 * np.pi)


def as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class InputPoint:
    t_scaled: float
    value: float

    def __post_init__(self):
        if not 0.0 <= self.t_scaled < 1.0:
            raise ValueError(f"scaled time {self.t_scaled} outside [0, 1)")
        if not np.isfinite(self.value):
            raise ValueError("input value must be finite")

    @classmethod
    def from_index(cls, t, value, horizon=DEFAULT_HORIZON):
        """Input for time index ``t`` (relabelled years) on an axis of ``horizon`` years."""
        return cls(t / horizon, float(value))

    def as_array(self):
        return np.array([self.t_scaled, self.value])


def scaled_times(t_first, t_last, horizon):
    return np.arange(t_first, t_last + 1, dtype=float) / horizon


def basis(Z):
    """Rows ``h(z)' = (1, z')`` for an ``(L, p)`` input array."""
    Z = np.atleast_2d(Z)
    return np.hstack([np.ones((Z.shape[0], 1)), Z])


def corr_kernel(z1, z2, r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise NonPositiveSmoothness("smoothness parameters must be positive")
    a = z1.as_array() if isinstance(z1, InputPoint) else np.asarray(z1, dtype=float)
    b = z2.as_array() if isinstance(z2, InputPoint) else np.asarray(z2, dtype=float)
    d = a - b
    return float(np.exp(-np.sum(r * d * d)))


@dataclass(frozen=True)
class DesignGrid:
    """Latin-hypercube design. Column 0 is scaled time in [0, 1)."""

    points: np.ndarray
    seed: int = 0
    value_range: tuple = DEFAULT_VALUE_RANGE
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def H(self):
        return basis(self.points)


def _lhs_column(n, lo, hi, rng):
    width = (hi - lo) / n
    col = lo + width * (np.arange(n) + rng.random(n))
    return rng.permutation(col)


def build_design_grid(n=50, value_range=DEFAULT_VALUE_RANGE, seed=0, horizon=DEFAULT_HORIZON, dims=1):
    """Component-wise Latin hypercube on ``[0,1) x value_range^dims``."""
    if n < 2:
        raise ValueError("grid needs at least two points")
    lo, hi = map(float, value_range)
    if not hi > lo:
        raise DegenerateRange(f"value range [{lo}, {hi}] is degenerate")
    rng = np.random.default_rng(seed)
    cols = [_lhs_column(n, 0.0, 1.0, rng)]
    cols += [_lhs_column(n, lo, hi, rng) for _ in range(dims)]
    return DesignGrid(np.column_stack(cols), seed, (lo, hi), horizon)


@dataclass(frozen=True)
class GpParams:
    beta: np.ndarray
    sigma2_f: float
    r: np.ndarray
    sigma2_eps: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.array(self.beta, dtype=float).reshape(3))
        object.__setattr__(self, "r", np.array(self.r, dtype=float).reshape(2))
        if not (self.sigma2_f > 0 and self.sigma2_eps > 0):
            raise ValueError("variances must be positive")
        if np.any(self.r <= 0):
            raise NonPositiveSmoothness("smoothness parameters must be positive")

    def positive_block(self):
        """``(sigma2_f, sigma2_eps, r_1, r_2)``, the TMCMC-updated coordinates."""
        return np.array([self.sigma2_f, self.sigma2_eps, self.r[0], self.r[1]])

    def with_positive_block(self, theta):
        return replace(self, sigma2_f=float(theta[0]), sigma2_eps=float(theta[1]), r=np.array(theta[2:4]))


def inv_gamma_logpdf(s2, alpha, gamma):
    """Log density of ``s2^{-(alpha+2)/2} exp(-gamma / (2 s2))``, normalised."""
    a, b = alpha / 2.0, gamma / 2.0
    from scipy.special import gammaln

    return a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(s2) - b / s2


@dataclass(frozen=True)
class PriorConfig:
    beta0: np.ndarray
    Sigma_beta0: np.ndarray
    alpha_f: float
    gamma_f: float
    alpha_eps: float
    gamma_eps: float
    mu_r: float = -0.5
    sigma2_r: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta0", np.array(self.beta0, dtype=float).reshape(3))
        object.__setattr__(self, "Sigma_beta0", np.array(self.Sigma_beta0, dtype=float).reshape(3, 3))

    @property
    def sigma2_f_mean(self):
        return self.gamma_f / (self.alpha_f - 2.0)

    @property
    def sigma2_eps_mean(self):
        return self.gamma_eps / (self.alpha_eps - 2.0)

    def log_prior(self, params):
        lp = _mvn_logpdf(params.beta, self.beta0, self.Sigma_beta0)
        lp += inv_gamma_logpdf(params.sigma2_f, self.alpha_f, self.gamma_f)
        lp += inv_gamma_logpdf(params.sigma2_eps, self.alpha_eps, self.gamma_eps)
        logr = np.log(params.r)
        lp += np.sum(-0.5 * (_LOG_2PI + np.log(self.sigma2_r)) - (logr - self.mu_r) ** 2 / (2 * self.sigma2_r) - logr)
        return float(lp)

    def sample(self, rng):
        rng = as_rng(rng)
        beta = rng.multivariate_normal(self.beta0, self.Sigma_beta0)
        s2f = 1.0 / rng.gamma(self.alpha_f / 2.0, 2.0 / self.gamma_f)
        s2e = 1.0 / rng.gamma(self.alpha_eps / 2.0, 2.0 / self.gamma_eps)
        r = np.exp(self.mu_r + np.sqrt(self.sigma2_r) * rng.standard_normal(2))
        return GpParams(beta, s2f, r, s2e)

    def to_dict(self):
        return {
            "beta0": self.beta0.tolist(),
            "Sigma_beta0": self.Sigma_beta0.tolist(),
            "alpha_f": self.alpha_f,
            "gamma_f": self.gamma_f,
            "alpha_eps": self.alpha_eps,
            "gamma_eps": self.gamma_eps,
            "mu_r": self.mu_r,
            "sigma2_r": self.sigma2_r,
        }


def _mvn_logpdf(x, mean, cov):
    c = linalg.cho_factor(cov, lower=True)
    d = x - mean
    return float(-0.5 * (len(d) * _LOG_2PI + 2 * np.sum(np.log(np.diag(c[0]))) + d @ linalg.cho_solve(c, d)))


def derive_prior_config(series, alpha=4.01, mu_r=-0.5, sigma2_r=1.0, stride=THIN_STRIDE):
    """Data-driven prior: intercept and variance scale from the 5-thinned series."""
    thinned = thin_series(series, stride).x
    if len(thinned) < 2:
        raise SeriesTooShort(f"series {series.label!r} leaves {len(thinned)} point(s) after thinning")
    a = np.var(thinned, ddof=1) / 2.0
    gamma = a * (alpha - 2.0)
    return PriorConfig(
        beta0=[thinned.mean(), 0.0, 0.0],
        Sigma_beta0=np.eye(3),
        alpha_f=alpha, gamma_f=gamma, alpha_eps=alpha, gamma_eps=gamma,
        mu_r=mu_r, sigma2_r=sigma2_r,
    )


def factor_correlation(Z, r, nugget=JITTER):
    """Return ``(A, L, L^{-1})`` for the jittered correlation matrix of ``Z``."""
    A = kernels.corr_matrix(Z, np.asarray(r, dtype=float), nugget=nugget)
    try:
        L = linalg.cholesky(A, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularCorrelation(f"correlation matrix not positive definite for r={r}") from exc
    Linv = linalg.solve_triangular(L, np.eye(len(A)), lower=True)
    return A, L, Linv


@dataclass(frozen=True)
class LookupTable:
    """Grid, GP values ``d`` on the grid and the caches tied to ``r``."""

    grid: DesignGrid
    d: np.ndarray
    r: np.ndarray
    nugget: float = JITTER
    corr: np.ndarray = field(default=None, repr=False)
    chol: np.ndarray = field(default=None, repr=False)
    chol_inv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "d", np.array(self.d, dtype=float))
        if self.corr is None:
            A, L, Linv = factor_correlation(self.grid.points, r, self.nugget)
            object.__setattr__(self, "corr", A)
            object.__setattr__(self, "chol", L)
            object.__setattr__(self, "chol_inv", Linv)

    @classmethod
    def build(cls, grid, d, r, nugget=JITTER):
        return cls(grid, d, r, nugget)

    @property
    def H(self):
        return self.grid.H

    @property
    def corr_inv(self):
        return self.chol_inv.T @ self.chol_inv

    def with_d(self, d):
        return replace(self, d=np.array(d, dtype=float))

    def with_r(self, r):
        return LookupTable(self.grid, self.d, r, self.nugget)

    def check(self, params):
        if not np.array_equal(self.r, params.r):
            raise StaleCache(f"table cached for r={self.r}, params have r={params.r}")

    def cross(self, X):
        return kernels.cross_corr(np.atleast_2d(X), self.grid.points, self.r, nugget=self.nugget)


def lookup_prior_moments(grid, params, nugget=JITTER):
    A, _, _ = factor_correlation(grid.points, params.r, nugget)
    return grid.H @ params.beta, params.sigma2_f * A


def lookup_conditional_on_first_step(grid, params, x0, f10, t1=None, nugget=JITTER):
    """Moments of the table values given ``f`` at the first input ``(t1, x0)``.

    ``t1`` is the scaled time of index 1 and defaults to ``1 / grid.horizon``.
    """
    if t1 is None:
        t1 = 1.0 / grid.horizon
    A, _, _ = factor_correlation(grid.points, params.r, nugget)
    z = np.array([[t1, x0]])
    s = kernels.cross_corr(z, grid.points, params.r, nugget=nugget)[0]
    h = basis(z)[0]
    mean = grid.H @ params.beta + s * (f10 - h @ params.beta)
    cov = params.sigma2_f * (A - np.outer(s, s))
    return mean, cov


def grid_hits(X, points):
    """``(rows, cols)`` with ``X[rows] == points[cols]`` exactly.

    At a design point the emulator returns the stored table value with no
    GP uncertainty; the algebraic identity is exact there but the solve with
    a jittered correlation matrix only reproduces it to ``cond(A) * eps``.
    """
    return np.nonzero(np.all(X[:, None, :] == points[None, :, :], axis=-1))


def conditional_moments(X, table, params, include_noise=True):
    """Vectorised one-step moments for inputs ``X`` of shape ``(L, 2)``."""
    table.check(params)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    S = table.cross(X)
    U = S @ table.chol_inv.T
    resid = table.d - table.H @ params.beta
    alpha = table.chol_inv.T @ (table.chol_inv @ resid)
    mean = basis(X) @ params.beta + S @ alpha
    c = np.maximum(1.0 - np.sum(U * U, axis=1), 0.0)
    rows, cols = grid_hits(X, table.grid.points)
    mean[rows], c[rows] = table.d[cols], 0.0
    var = params.sigma2_f * c
    if include_noise:
        var = var + params.sigma2_eps
    return mean, var


def one_step_conditional(x_prev, t_next, table, params, include_noise=True):
    """Mean and variance of ``x_{t+1}`` given ``x_t = x_prev`` and the table."""
    if isinstance(t_next, InputPoint):
        t_next = t_next.t_scaled
    mean, var = conditional_moments([[t_next, x_prev]], table, params, include_noise)
    return float(mean[0]), float(var[0])


def simulate_path(x0, t_range, table, params, seed=None, first_step="table"):
    """Draw ``x_a..x_b`` given ``x_{a-1} = x0``.

    ``first_step="marginal"`` draws ``x_a`` from the unconditioned GP marginal
    ``N(h'beta, sigma2_f + sigma2_eps)`` and uses the table afterwards.
    """
    table.check(params)
    a, b = t_range
    if b < a:
        raise ValueError("empty time range")
    rng = as_rng(seed)
    t_next = scaled_times(a, b, table.grid.horizon)
    noise = rng.standard_normal((1, len(t_next)))
    start = 0
    out = np.empty(len(t_next))
    if first_step == "marginal":
        h = basis([[t_next[0], x0]])[0]
        out[0] = h @ params.beta + np.sqrt(params.sigma2_f + params.sigma2_eps) * noise[0, 0]
        x0, start = out[0], 1
    elif first_step != "table":
        raise ValueError(f"first_step must be 'table' or 'marginal', got {first_step!r}")
    if start < len(t_next):
        out[start:] = kernels.simulate_paths(
            x0, t_next[start:], table.grid.points, params.r[None], params.beta[None],
            table.d[None], np.array([params.sigma2_f]), np.array([params.sigma2_eps]),
            noise[:, start:], nugget=table.nugget,
        )[0]
    return out


def simulate_from_prior(x0, T, grid, params, seed=None, nugget=JITTER):
    """Generative look-up table procedure: ``x_1``, then the table, then ``x_2..x_T``.

    Returns ``(path, table)`` with ``path[t-1] = x_t``.
    """
    rng = as_rng(seed)
    t1 = 1.0 / grid.horizon
    h = basis([[t1, x0]])[0]
    f10 = h @ params.beta + np.sqrt(params.sigma2_f) * rng.standard_normal()
    x1 = f10 + np.sqrt(params.sigma2_eps) * rng.standard_normal()
    mean, cov = lookup_conditional_on_first_step(grid, params, x0, f10, t1, nugget)
    d = _draw_mvn(mean, cov, rng)
    table = LookupTable(grid, d, params.r, nugget)
    path = np.empty(T)
    path[0] = x1
    if T > 1:
        path[1:] = simulate_path(x1, (2, T), table, params, rng)
    return path, table


def _draw_mvn(mean, cov, rng):
    # eigh tolerates the rank deficiency of conditioned covariances
    w, V = np.linalg.eigh((cov + cov.T) / 2)
    return mean + V @ (np.sqrt(np.clip(w, 0, None)) * rng.standard_normal(len(mean)))


def segment_inputs(x_prev0, segment, t_first, horizon):
    """Inputs and targets for ``segment = (x_a, ..., x_b)`` with ``x_{a-1} = x_prev0``."""
    segment = np.asarray(segment, dtype=float)
    x_prev = np.concatenate([[x_prev0], segment[:-1]])
    t_next = scaled_times(t_first, t_first + len(segment) - 1, horizon)
    return np.column_stack([t_next, x_prev]), segment


def normal_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def path_log_likelihood(x_prev0, segment, t_first, table, params, first_step_marginal=None):
    """Sum of one-step log densities of ``segment`` starting at index ``t_first``.

    When the segment starts at index 1 the first term defaults to the GP
    marginal ``N(h'beta, sigma2_f + sigma2_eps)``.
    """
    if len(segment) == 0:
        raise ValueError("segment is empty")
    if first_step_marginal is None:
        first_step_marginal = t_first == 1
    X, y = segment_inputs(x_prev0, segment, t_first, table.grid.horizon)
    mean, var = conditional_moments(X, table, params)
    if first_step_marginal:
        mean[0] = basis(X[:1])[0] @ params.beta
        var[0] = params.sigma2_f + params.sigma2_eps
    if np.any(var <= 0):
        raise NonFiniteLikelihood("non-positive conditional variance")
    ll = float(np.sum(normal_logpdf(y, mean, var)))
    if not np.isfinite(ll):
        raise NonFiniteLikelihood("log likelihood is not finite")
    return ll
