"""Run configuration shared by the command-line front end."""
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import InputError
from .gp import DEFAULT_VALUE_RANGE
from .mvgp import MV_VALUE_RANGE
from .selection import SelectionConfig

PROFILES = ("paper", "desk")
DESK_DIVISOR = 10
DESK_MAX_K = 5


@dataclass(frozen=True)
class RunConfig:
    scenario: str = ""
    manifest: str = None
    profile: str = "paper"
    n_total: int = 60000
    n_burnin: int = 10000
    mv_n_total: int = 100000
    mv_n_burnin: int = 10000
    mv_keep_draws: int = 1000
    grid_n: int = 50
    value_range: tuple = DEFAULT_VALUE_RANGE
    mv_value_range: tuple = MV_VALUE_RANGE
    grid_seed: int = 0
    seed: int = 0
    n_paths: int = None
    alpha: float = 0.05
    c: float = 0.01
    beta_grid: tuple = None
    gibbs_iter: int = 100000
    gibbs_burn: int = 10000
    workers: int = None
    marginal: str = "posterior"
    max_models: int = None
    forecast_end_year: int = None
    forecast_level: float = 0.5
    benchmark_celsius: tuple = (13.895, 14.895)

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise InputError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.n_burnin > self.n_total or self.mv_n_burnin > self.mv_n_total:
            raise InputError("burn-in exceeds chain length")
        if not 0 < self.alpha < 1 or not 0 < self.forecast_level < 1:
            raise InputError("alpha and forecast_level must lie in (0, 1)")
        if self.c <= 0:
            raise InputError("c must be positive")

    def selection_config(self, keep_chains=False):
        return SelectionConfig(
            n_total=self.n_total,
            n_burnin=self.n_burnin,
            grid_n=self.grid_n,
            value_range=tuple(self.value_range),
            grid_seed=self.grid_seed,
            seed=self.seed,
            n_paths=self.n_paths,
            alpha=self.alpha,
            c=self.c,
            beta_grid=None if self.beta_grid is None else tuple(self.beta_grid),
            gibbs_iter=self.gibbs_iter,
            gibbs_burn=self.gibbs_burn,
            workers=self.workers,
            marginal=self.marginal,
            keep_chains=keep_chains,
            scenario=self.scenario,
        )

    def to_dict(self):
        return asdict(self)


def profile_defaults(profile):
    """Chain lengths for a profile; ``desk`` divides the long runs by ten."""
    base = RunConfig()
    if profile == "paper":
        return {"profile": "paper"}
    if profile == "desk":
        return {
            "profile": "desk",
            "n_total": base.n_total // DESK_DIVISOR,
            "n_burnin": base.n_burnin // DESK_DIVISOR,
            "mv_n_total": base.mv_n_total // DESK_DIVISOR,
            "mv_n_burnin": base.mv_n_burnin // DESK_DIVISOR,
            "max_models": DESK_MAX_K,
        }
    raise InputError(f"profile must be one of {PROFILES}, got {profile!r}")


_FIELDS = {f.name for f in fields(RunConfig)}


def load_run_config(path=None, profile=None, overrides=None):
    """Profile defaults, then the JSON file, then explicit overrides."""
    file_values = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise InputError(f"{path}: config file not found")
        try:
            file_values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        unknown = set(file_values) - _FIELDS
        if unknown:
            raise InputError(f"{path}: unknown config keys {sorted(unknown)}")
    prof = profile or file_values.get("profile") or "paper"
    values = profile_defaults(prof)
    values.update({k: v for k, v in file_values.items() if k != "profile"})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values["profile"] = prof
    for key in ("value_range", "mv_value_range", "benchmark_celsius", "beta_grid"):
        if values.get(key) is not None:
            values[key] = tuple(values[key])
    return RunConfig(**values)


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
