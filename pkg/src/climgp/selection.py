"""Bayesian multiple testing over K competing dynamic models.

Each model contributes a prior (built from its own series); all models are
fitted to the same averaged future segment. The forward evidence is the
marginal density of that segment, the inverse evidence is whether the
observed discrepancy is compatible with the reference discrepancies of the
inverse posterior. Both combine into the alternative probabilities ``v_k``,
which drive the decision rule and the cFDR/cFNR curves.
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import (
    ChainFailure,
    ClimGPError,
    EmptyChain,
    EmptyGrid,
    InputError,
    NonFiniteMarginal,
    OutOfRange,
)
from .gp import DEFAULT_VALUE_RANGE, as_rng, build_design_grid, derive_prior_config
from .mcmc import DataSegment, TmcmcConfig, run_chain
from .posteriors import (
    DEFAULT_ALPHA,
    DEFAULT_C,
    goodness_of_fit,
    sample_inverse_posterior,
    summarize_paths,
)

log = logging.getLogger(__name__)

MEASURES = ("s1", "s2")
DEFAULT_BETA_GRID = np.round(np.linspace(0.005, 0.995, 199), 10)


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureState:
    """One state of the ``(zeta, p)`` Gibbs sampler; ``zeta`` is 1-based."""

    zeta: int
    p: np.ndarray
    alpha_dir: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if np.any(p < 0) or not np.isclose(p.sum(), 1.0):
            raise ValueError("p must lie on the simplex")
        if not 1 <= self.zeta <= len(p):
            raise ValueError(f"zeta must be in 1..{len(p)}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "alpha_dir", np.asarray(self.alpha_dir, dtype=float))


@dataclass(frozen=True)
class HypothesisSpec:
    """Reference interval, observed discrepancy and inclusion probability of one model."""

    lower: float
    upper: float
    observed: float
    inclusion_prob: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("reference interval is reversed")
        if not 0.0 <= self.inclusion_prob <= 1.0:
            raise OutOfRange("inclusion probability outside [0, 1]")

    def to_dict(self):
        return {
            "interval": [self.lower, self.upper],
            "observed": self.observed,
            "inclusion_prob": self.inclusion_prob,
        }


@dataclass(frozen=True)
class ZetaPosterior:
    zeta_prob: np.ndarray     # posterior frequency of each model
    p_draws: np.ndarray       # (n_iter, K)
    zeta_draws: np.ndarray    # 1-based


@dataclass(frozen=True)
class DecisionCurve:
    beta_grid: np.ndarray
    decisions: np.ndarray     # (G, K) of 0/1
    cfdr: np.ndarray
    cfnr: np.ndarray
    v: np.ndarray
    best_model: int           # 1-based
    threshold: float          # smallest grid value >= min v (nan if none)
    first_jump: float         # first grid value where (cFDR, cFNR) leave the all-reject value
    tie: bool

    def rows(self, measure=None):
        out = []
        for b, f, n in zip(self.beta_grid, self.cfdr, self.cfnr):
            row = {"beta": float(b), "cfdr": float(f), "cfnr": float(n)}
            if measure is not None:
                row["measure"] = measure
            out.append(row)
        return out

    def best_dict(self, labels=None):
        out = {
            "index": self.best_model,
            "v": float(self.v[self.best_model - 1]),
            "threshold": _nan_to_none(self.threshold),
            "first_jump": _nan_to_none(self.first_jump),
            "tie": self.tie,
        }
        if labels is not None:
            out["label"] = labels[self.best_model - 1]
        return out


def _nan_to_none(x):
    return None if x is None or not np.isfinite(x) else float(x)


# ---------------------------------------------------------------------------
# marginal densities
# ---------------------------------------------------------------------------

def _segment_arrays(segment):
    X = segment.inputs
    return X[:, 1].copy(), segment.values, X[:, 0].copy()


def estimate_log_marginal(chain, segment=None, n=None, recompute=False):
    """Log of the average over retained draws of the segment likelihood.

    With ``segment`` omitted (or equal to the one the chain was conditioned
    on) the per-draw log likelihoods stored in the chain are reused unless
    ``recompute`` is set. ``n`` keeps only the last ``n`` draws.
    """
    if len(chain) == 0:
        raise EmptyChain("chain has no retained draws")
    sel = slice(None) if n is None else slice(len(chain) - int(n), None)
    own = segment is None or (chain.segment is not None and chain.segment.same_as(segment))
    if own and not recompute:
        ll = chain.log_lik[sel]
    else:
        seg = segment if segment is not None else chain.segment
        if seg.first_step_marginal:
            raise ValueError("batch likelihood does not support a marginal first step")
        x_prev, x_next, t_next = _segment_arrays(seg)
        ll = kernels.path_loglik_batch(
            x_prev, x_next, t_next, chain.grid.points, chain.r[sel], chain.beta[sel],
            chain.d[sel], chain.sigma2_f[sel], chain.sigma2_eps[sel], nugget=chain.nugget,
        )
    ll = np.asarray(ll, dtype=float)
    if len(ll) == 0:
        raise EmptyChain("no draws selected")
    return float(logsumexp(ll) - np.log(len(ll)))


def estimate_log_marginal_prior(segment, prior, grid, n=2000, seed=None, nugget=None):
    """Textbook estimator: average the likelihood over draws from the prior."""
    from .gp import JITTER, factor_correlation

    rng = as_rng(seed)
    nugget = JITTER if nugget is None else nugget
    beta = np.empty((n, 3))
    s2f = np.empty(n)
    s2e = np.empty(n)
    r = np.empty((n, 2))
    d = np.empty((n, grid.n))
    for i in range(n):
        p = prior.sample(rng)
        _, L, _ = factor_correlation(grid.points, p.r, nugget)
        beta[i], s2f[i], s2e[i], r[i] = p.beta, p.sigma2_f, p.sigma2_eps, p.r
        d[i] = grid.H @ p.beta + np.sqrt(p.sigma2_f) * (L @ rng.standard_normal(grid.n))
    x_prev, x_next, t_next = _segment_arrays(segment)
    ll = kernels.path_loglik_batch(x_prev, x_next, t_next, grid.points, r, beta, d, s2f, s2e, nugget=nugget)
    return float(logsumexp(ll) - np.log(n))


# ---------------------------------------------------------------------------
# mixture sampler and decisions
# ---------------------------------------------------------------------------

def gibbs_zeta_p(log_marginals, alpha_dir=None, n_iter=100000, n_burn=10000, seed=None):
    """Gibbs sampler for the model indicator and the mixture weights.

    ``n_iter`` realisations are kept after discarding ``n_burn``.
    """
    lm = np.asarray(log_marginals, dtype=float)
    if lm.ndim != 1 or len(lm) == 0 or not np.all(np.isfinite(lm)):
        raise NonFiniteMarginal("log marginals must be a finite, non-empty vector")
    K = len(lm)
    alpha = np.ones(K) if alpha_dir is None else np.asarray(alpha_dir, dtype=float)
    if alpha.shape != (K,) or np.any(alpha <= 0):
        raise ValueError("alpha_dir must be K positive values")
    rng = as_rng(seed)
    total = n_iter + n_burn
    gammas = rng.gamma(alpha, size=(total, K))
    extra = rng.standard_exponential(total)
    u = rng.random(total)
    zeta, p = kernels.gibbs_zeta_p_loop(lm, gammas, extra, u)
    zeta, p = zeta[n_burn:], p[n_burn:]
    freq = np.bincount(zeta, minlength=K) / max(len(zeta), 1)
    return ZetaPosterior(freq, p, zeta + 1)


def collapsed_zeta_posterior(log_marginals, alpha_dir=None):
    """Exact ``P(zeta = k)`` with ``p`` integrated out: proportional to ``alpha_k m_k``."""
    lm = np.asarray(log_marginals, dtype=float)
    alpha = np.ones(len(lm)) if alpha_dir is None else np.asarray(alpha_dir, dtype=float)
    w = np.log(alpha) + lm
    return np.exp(w - logsumexp(w))


def alternative_probability(zeta_prob, inclusion_prob):
    """``v_k = 1 - P(zeta = k) * P(inclusion)``."""
    z = np.asarray(zeta_prob, dtype=float)
    q = np.asarray(inclusion_prob, dtype=float)
    if np.any((z < 0) | (z > 1)) or np.any((q < 0) | (q > 1)):
        raise OutOfRange("probabilities must lie in [0, 1]")
    out = 1.0 - z * q
    return float(out) if out.ndim == 0 else out


def optimal_decision(v, beta):
    """Reject the ``k``-th null exactly when ``v_k > beta``."""
    return (np.asarray(v, dtype=float) > beta).astype(int)


def cfdr_cfnr(d, v):
    d = np.asarray(d, dtype=float)
    v = np.asarray(v, dtype=float)
    if d.shape != v.shape:
        raise ValueError("decision and probability vectors differ in length")
    cfdr = np.sum(d * (1 - v)) / max(d.sum(), 1.0)
    cfnr = np.sum((1 - d) * v) / max((1 - d).sum(), 1.0)
    return float(cfdr), float(cfnr)


def decision_curve(v, beta_grid=None):
    v = np.asarray(v, dtype=float)
    grid = DEFAULT_BETA_GRID if beta_grid is None else np.asarray(beta_grid, dtype=float)
    if grid.size == 0:
        raise EmptyGrid("penalty grid is empty")
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0 or grid[-1] >= 1:
        raise ValueError("penalty grid must be strictly increasing inside (0, 1)")
    D = (v[None, :] > grid[:, None]).astype(int)
    rates = np.array([cfdr_cfnr(d, v) for d in D])
    vmin = v.min()
    best = int(np.argmin(v)) + 1
    tie = int(np.sum(v == vmin)) > 1
    above = np.flatnonzero(grid >= vmin)
    threshold = float(grid[above[0]]) if above.size else np.nan
    # value of (cFDR, cFNR) as beta -> 0, where every null is rejected
    base = np.array(cfdr_cfnr(np.ones_like(v), v))
    moved = np.flatnonzero(np.any(np.abs(rates - base) > 1e-12, axis=1))
    first_jump = float(grid[moved[0]]) if moved.size else np.nan
    return DecisionCurve(grid, D, rates[:, 0], rates[:, 1], v, best, threshold, first_jump, tie)


def inclusion_probability(reference, observed, lower, upper):
    """Fraction of draws with ``S(reference) - S(observed)`` inside ``[lower, upper]``."""
    diff = np.asarray(reference, dtype=float) - observed
    return float(np.mean((diff >= lower) & (diff <= upper)))


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionConfig:
    n_total: int = 60000
    n_burnin: int = 10000
    grid_n: int = 50
    value_range: tuple = DEFAULT_VALUE_RANGE
    grid_seed: int = 0
    seed: int = 0
    n_paths: int = None
    alpha: float = DEFAULT_ALPHA
    c: float = DEFAULT_C
    beta_grid: tuple = None
    gibbs_iter: int = 100000
    gibbs_burn: int = 10000
    tmcmc_scales: tuple = (0.05, 0.05, 0.05, 0.05)
    workers: int = None
    marginal: str = "posterior"
    prior_draws: int = 2000
    keep_chains: bool = False
    scenario: str = ""

    def __post_init__(self):
        if self.marginal not in ("posterior", "prior"):
            raise InputError("marginal estimator must be 'posterior' or 'prior'")


@dataclass
class ModelFit:
    label: str
    log_marginal: float
    gof: object
    hypotheses: dict
    acceptance: float
    summary: object = field(default=None, repr=False)
    chain: object = field(default=None, repr=False)


@dataclass
class SelectionReport:
    scenario: str
    labels: list
    fits: list
    zeta: ZetaPosterior
    v: dict
    curves: dict
    indistinguishable: dict
    config: SelectionConfig = None

    @property
    def K(self):
        return len(self.labels)

    def best_model(self, measure):
        return self.curves[measure].best_model

    def gof_table(self):
        rows = []
        for k, (label, fit) in enumerate(zip(self.labels, self.fits), start=1):
            row = {"model": k, "label": label}
            row.update(fit.gof.row())
            row["verdict_s1"] = fit.gof.measures["s1"].verdict
            row["verdict_s2"] = fit.gof.measures["s2"].verdict
            rows.append(row)
        return rows

    def to_dict(self):
        best = {}
        for m in MEASURES:
            b = self.curves[m].best_dict(self.labels)
            b["indistinguishable"] = self.indistinguishable[m]
            best[m] = b
        return {
            "scenario": self.scenario,
            "K": self.K,
            "labels": list(self.labels),
            "log_marginals": [f.log_marginal for f in self.fits],
            "zeta_prob": self.zeta.zeta_prob.tolist(),
            "inclusion_prob": {
                m: [f.hypotheses[m].inclusion_prob for f in self.fits] for m in MEASURES
            },
            "v": {m: self.v[m].tolist() for m in MEASURES},
            "curves": {m: self.curves[m].rows() for m in MEASURES},
            "best_model": best,
            "gof_table": self.gof_table(),
            "acceptance": [f.acceptance for f in self.fits],
        }

    def curve_rows(self):
        rows = []
        for m in MEASURES:
            rows.extend(self.curves[m].rows(m))
        return rows


def _fit_one(job):
    """Full per-model pipeline. Runs in a worker process."""
    k, label, series, segment, x0, observed, grid, cfg, seed = job
    try:
        prior = derive_prior_config(series)
        chain = run_chain(
            segment, prior, grid, cfg.n_total, cfg.n_burnin,
            TmcmcConfig(tuple(cfg.tmcmc_scales)), seed=seed.spawn(1)[0],
        )
        if cfg.marginal == "prior":
            lm = estimate_log_marginal_prior(segment, prior, grid, cfg.prior_draws, seed.spawn(1)[0])
        else:
            lm = estimate_log_marginal(chain)
        T0 = segment.t_first - 1
        paths = sample_inverse_posterior(x0, T0, chain, cfg.n_paths, seed.spawn(1)[0])
        summary = summarize_paths(paths, alpha=cfg.alpha)
        gof = goodness_of_fit(paths, observed, cfg.alpha, cfg.c, summary)
        hyps = {}
        for m in MEASURES:
            mc = gof.measures[m]
            incl = inclusion_probability(mc.reference, mc.observed, mc.lower, mc.upper)
            hyps[m] = HypothesisSpec(mc.lower, mc.upper, mc.observed, incl)
    except (ClimGPError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        raise ChainFailure(label or f"model {k}", exc) from exc
    if not np.isfinite(lm):
        raise ChainFailure(label or f"model {k}", NonFiniteMarginal("log marginal is not finite"))
    return ModelFit(label, lm, gof, hyps, chain.acceptance_rates["tmcmc"], summary,
                    chain if cfg.keep_chains else None)


def default_workers(K):
    return max(1, min(os.cpu_count() or 1, K))


def _indistinguishable(v, series, step):
    order = np.argsort(v, kind="stable")
    a, b = order[0], order[1]
    if abs(v[b] - v[a]) < step:
        return True
    return bool(np.array_equal(series[a].x, series[b].x))


def run_selection(dataset, config=None):
    """Fit every model to the averaged future segment and test the K hypotheses."""
    cfg = config or SelectionConfig()
    if dataset.K < 2:
        raise InputError("model selection needs at least two models")
    grid = build_design_grid(cfg.grid_n, cfg.value_range, cfg.grid_seed, dataset.horizon)
    x_prev, future = dataset.future_segment(dataset.averaged)
    segment = DataSegment(x_prev, future, dataset.T0 + 1, dataset.horizon)
    x0, observed = dataset.observed_segment()
    seeds = np.random.SeedSequence(cfg.seed).spawn(dataset.K + 1)
    jobs = [
        (k + 1, m.label, m, segment, x0, observed, grid, cfg, seeds[k])
        for k, m in enumerate(dataset.models)
    ]
    workers = cfg.workers or default_workers(dataset.K)
    log.info("fitting %d models on %d worker(s)", dataset.K, workers)
    if workers == 1:
        fits = [_fit_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(_fit_one, jobs))
    labels = [f.label or f"model_{k}" for k, f in enumerate(fits, start=1)]
    lm = np.array([f.log_marginal for f in fits])
    zeta = gibbs_zeta_p(lm, n_iter=cfg.gibbs_iter, n_burn=cfg.gibbs_burn, seed=seeds[-1])
    beta_grid = None if cfg.beta_grid is None else np.asarray(cfg.beta_grid, dtype=float)
    v, curves, indist = {}, {}, {}
    for m in MEASURES:
        incl = np.array([f.hypotheses[m].inclusion_prob for f in fits])
        v[m] = alternative_probability(zeta.zeta_prob, incl)
        curves[m] = decision_curve(v[m], beta_grid)
        g = curves[m].beta_grid
        step = float(g[1] - g[0]) if len(g) > 1 else 0.0
        indist[m] = _indistinguishable(v[m], dataset.models, step)
    return SelectionReport(cfg.scenario, labels, fits, zeta, v, curves, indist, cfg)
