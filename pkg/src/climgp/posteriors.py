"""Inverse and forward posterior trajectories, density summaries and fit checks."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AxisMismatch, ChainMismatch, MeshTooNarrow, NonPositiveC
from .gp import as_rng, scaled_times

DEFAULT_ALPHA = 0.05
DEFAULT_C = 0.01
MESH_CELLS = 512
MESH_PAD = 0.01
VERDICTS = ("fits", "underfits", "overfits")


@dataclass(frozen=True)
class PosteriorPathDraws:
    """``draws[i, j]`` is trajectory ``i`` at time index ``t_index[j]``."""

    draws: np.ndarray
    t_index: np.ndarray
    origin: str
    origin_year: int = 0

    def __post_init__(self):
        draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if draws.shape[0] < 1 or not np.all(np.isfinite(draws)):
            raise ValueError("posterior draws must be non-empty and finite")
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "t_index", np.asarray(self.t_index, dtype=int))

    @property
    def years(self):
        return self.origin_year + self.t_index

    @property
    def M(self):
        return self.draws.shape[0]


def select_draws(n_available, M=None):
    """Evenly spaced indices into a chain of ``n_available`` retained draws."""
    if n_available < 1:
        raise ChainMismatch("chain has no retained draws")
    if M is None:
        return np.arange(n_available)
    if M < 1:
        raise ValueError("M must be positive")
    return np.round(np.linspace(0, n_available - 1, M)).astype(int)


def _simulate(chain, x_start, t_first, t_last, M, seed):
    idx = select_draws(len(chain), M)
    rng = as_rng(seed)
    t_next = scaled_times(t_first, t_last, chain.grid.horizon)
    noise = rng.standard_normal((len(idx), len(t_next)))
    return kernels.simulate_paths(
        x_start, t_next, chain.grid.points, chain.r[idx], chain.beta[idx], chain.d[idx],
        chain.sigma2_f[idx], chain.sigma2_eps[idx], noise, nugget=chain.nugget,
    )


def sample_inverse_posterior(x0, T0, chain, M=None, seed=None, future=None, origin_year=0):
    """Trajectories ``x_1..x_T0`` from ``x0`` under table draws conditioned on the future.

    The coupling between ``x_T0`` and ``x_{T0+1}`` is dropped: each draw of
    the table and parameters simply drives the dynamics forward from ``x0``.
    """
    seg = chain.segment
    if seg is not None:
        if seg.t_first != T0 + 1:
            raise ChainMismatch(f"chain conditioned from index {seg.t_first}, expected {T0 + 1}")
        if future is not None and not seg.same_as(future):
            raise ChainMismatch("chain was conditioned on a different future segment")
    draws = _simulate(chain, x0, 1, T0, M, seed)
    return PosteriorPathDraws(draws, np.arange(1, T0 + 1), "inverse", origin_year)


def sample_forward_posterior(x_T0, T0, T, chain, M=None, seed=None, observed=None, origin_year=0):
    """Trajectories ``x_{T0+1}..x_T`` from the last observed value."""
    seg = chain.segment
    if seg is not None:
        if seg.t_last != T0:
            raise ChainMismatch(f"chain conditioned up to index {seg.t_last}, expected {T0}")
        if observed is not None and not seg.same_as(observed):
            raise ChainMismatch("chain was conditioned on a different observed segment")
    draws = _simulate(chain, x_T0, T0 + 1, T, M, seed)
    return PosteriorPathDraws(draws, np.arange(T0 + 1, T + 1), "forward", origin_year)


@dataclass(frozen=True)
class DensitySummary:
    t_index: np.ndarray
    years: np.ndarray
    edges: np.ndarray
    mass: np.ndarray        # (L, cells), rows sum to one
    mode: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def to_dict(self, with_mass=False):
        out = {
            "alpha": self.alpha,
            "years": self.years.tolist(),
            "mode": self.mode.tolist(),
            "mean": self.mean.tolist(),
            "var": self.var.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }
        if with_mass:
            out["edges"] = self.edges.tolist()
            out["mass"] = self.mass.tolist()
        return out


def default_mesh(values, cells=MESH_CELLS, pad=MESH_PAD):
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo
    if span == 0.0:
        span = max(abs(lo), 1.0) * 1e-3
        lo, hi = lo - span / 2, hi + span / 2
    return np.linspace(lo - pad * span, hi + pad * span, cells + 1)


def equal_tailed(draws, alpha, axis=0):
    q = np.quantile(draws, [alpha / 2, 1 - alpha / 2], axis=axis)
    return q[0], q[1]


def summarize_paths(paths, mesh=None, alpha=DEFAULT_ALPHA):
    """Per-index histogram on a common mesh, histogram mode, mean and interval.

    Ties for the mode go to the lowest cell.
    """
    X = paths.draws
    edges = default_mesh(X) if mesh is None else np.asarray(mesh, dtype=float)
    if X.min() < edges[0] or X.max() > edges[-1]:
        raise MeshTooNarrow(f"mesh [{edges[0]}, {edges[-1]}] does not cover draws [{X.min()}, {X.max()}]")
    cells = len(edges) - 1
    idx = np.clip(np.searchsorted(edges, X, side="right") - 1, 0, cells - 1)
    L = X.shape[1]
    counts = np.zeros((L, cells))
    cols = np.broadcast_to(np.arange(L), X.shape)
    np.add.at(counts, (cols.ravel(), idx.ravel()), 1.0)
    mass = counts / X.shape[0]
    centers = 0.5 * (edges[:-1] + edges[1:])
    mode = centers[np.argmax(mass, axis=1)]
    lower, upper = equal_tailed(X, alpha)
    return DensitySummary(
        paths.t_index, paths.years, edges, mass, mode,
        X.mean(axis=0), X.var(axis=0), lower, upper, alpha,
    )


def _check_c(c):
    if not c > 0:
        raise NonPositiveC("c must be positive")


def discrepancy_s1(v, modes, variances, c=DEFAULT_C):
    """Mean absolute deviation from the modes, standardised by ``sqrt(var + c)``."""
    _check_c(c)
    v, modes, variances = (np.asarray(a, dtype=float) for a in (v, modes, variances))
    return np.mean(np.abs(v - modes) / np.sqrt(variances + c), axis=-1)


def discrepancy_s2(v, modes, variances, c=DEFAULT_C):
    """Mean squared deviation from the modes, standardised by ``var + c``."""
    _check_c(c)
    v, modes, variances = (np.asarray(a, dtype=float) for a in (v, modes, variances))
    return np.mean((v - modes) ** 2 / (variances + c), axis=-1)


DISCREPANCIES = {"s1": discrepancy_s1, "s2": discrepancy_s2}


@dataclass(frozen=True)
class MeasureCheck:
    observed: float
    lower: float
    upper: float
    verdict: str
    reference: np.ndarray   # per-draw reference discrepancies

    def to_dict(self):
        return {"observed": self.observed, "bci": [self.lower, self.upper], "verdict": self.verdict}


def verdict(observed, lower, upper):
    if observed < lower:
        return "overfits"
    if observed > upper:
        return "underfits"
    return "fits"


@dataclass(frozen=True)
class GofReport:
    measures: dict
    alpha: float
    c: float

    COLUMNS = ("observed_s1", "bci_s1", "observed_s2", "bci_s2")

    def row(self):
        """The four goodness-of-fit columns: observed S and its reference interval, per measure."""
        s1, s2 = self.measures["s1"], self.measures["s2"]
        return {
            "observed_s1": s1.observed,
            "bci_s1": [s1.lower, s1.upper],
            "observed_s2": s2.observed,
            "bci_s2": [s2.lower, s2.upper],
        }

    def to_dict(self):
        out = self.row()
        out["verdict_s1"] = self.measures["s1"].verdict
        out["verdict_s2"] = self.measures["s2"].verdict
        out["alpha"] = self.alpha
        out["c"] = self.c
        return out


def goodness_of_fit(paths, observed, alpha=DEFAULT_ALPHA, c=DEFAULT_C, summary=None):
    """Compare observed discrepancies with the reference distribution over draws."""
    observed = np.asarray(observed, dtype=float)
    if observed.shape != (paths.draws.shape[1],):
        raise AxisMismatch(f"observed has shape {observed.shape}, draws cover {paths.draws.shape[1]} indices")
    summary = summary or summarize_paths(paths, alpha=alpha)
    measures = {}
    for name, fn in DISCREPANCIES.items():
        ref = fn(paths.draws, summary.mode, summary.var, c)
        lo, hi = np.quantile(ref, [alpha / 2, 1 - alpha / 2])
        obs = float(fn(observed, summary.mode, summary.var, c))
        measures[name] = MeasureCheck(obs, float(lo), float(hi), verdict(obs, lo, hi), ref)
    return GofReport(measures, alpha, c)
