import json
from pathlib import Path

import numpy as np
import pytest

from climgp import gp

T_SYN = 80
T0_SYN = 40
TRUTH = gp.GpParams([0.4, 0.15, 0.85], 1e-3, [1.0, 1.0], 1e-3)


def synthetic_path(T=T_SYN, n=30, grid_seed=3, path_seed=11, params=TRUTH):
    """``(x, grid)`` with ``x[t]`` for ``t = 0..T`` drawn from a known GP dynamic model."""
    grid = gp.build_design_grid(n, value_range=(0.0, 5.0), seed=grid_seed, horizon=T + 1)
    x0 = np.log(14.0)
    path, _ = gp.simulate_from_prior(x0, T, grid, params, seed=path_seed)
    return np.r_[x0, path], grid


def _write_csv(path, start_year, log_values):
    rows = ["year,value"]
    rows += [f"{start_year + i},{np.exp(v) - 14.0:.12f}" for i, v in enumerate(log_values)]
    Path(path).write_text("\n".join(rows) + "\n")


def write_scenario(root, amplitude=0.3, with_models=True):
    """Observed series plus three models whose average is model 2 exactly.

    Models 1 and 3 oscillate symmetrically around model 2, so model 2 is the
    one that generated the averaged series. Returns the manifest path.
    """
    root = Path(root)
    data = root / "data"
    data.mkdir(parents=True, exist_ok=True)
    x, _ = synthetic_path()
    _write_csv(data / "obs.csv", 2000, x[:T0_SYN + 1])
    entries = [{"path": "data/obs.csv", "unit": "anomaly-celsius", "role": "observed", "label": "obs"}]
    if with_models:
        m2 = x[20:]
        ramp = np.linspace(0.0, 1.0, len(m2))
        wave = 0.1 + amplitude * np.sin(2 * np.pi * 3 * ramp)
        for k, series in enumerate((m2 + wave, m2, m2 - wave), start=1):
            _write_csv(data / f"m{k}.csv", 2020, series)
            entries.append({"path": f"data/m{k}.csv", "unit": "anomaly-celsius", "role": "model", "label": f"m{k}"})
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({"series": entries}, indent=2))
    return manifest


def write_quick_config(root, **extra):
    cfg = {
        "n_total": 300, "n_burnin": 100, "grid_n": 20,
        "gibbs_iter": 2000, "gibbs_burn": 200,
        "mv_n_total": 60, "mv_n_burnin": 20, "n_paths": 200,
    }
    cfg.update(extra)
    path = Path(root) / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def random_params(rng, r_range=(0.3, 3.0)):
    return gp.GpParams(
        rng.normal(size=3) * [1.0, 0.5, 0.5] + [1.0, 0.0, 0.5],
        float(rng.uniform(1e-3, 0.5)),
        rng.uniform(*r_range, size=2),
        float(rng.uniform(1e-4, 0.1)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenario_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("scenario")
    write_scenario(root)
    write_quick_config(root)
    return root


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
