"""Report, density, curve and chain files."""
import csv
import datetime as _dt
import json
from pathlib import Path

import numpy as np

from .errors import InputError
from .gp import DesignGrid
from .mvgp import MvChainOutput, MvDataSegment


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, payload, timestamp=True):
    """Write ``payload`` as indented JSON; the only varying field is ``generated_at``."""
    out = dict(payload)
    if timestamp:
        out["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    Path(path).write_text(json.dumps(out, indent=2, default=_default) + "\n")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_density_csv(path, summary):
    """Long format ``year,value,mass``: one row per year and mesh cell."""
    centers = summary.centers
    rows = (
        (int(year), repr(float(v)), repr(float(m)))
        for year, masses in zip(summary.years, summary.mass)
        for v, m in zip(centers, masses)
    )
    _write_rows(path, ("year", "value", "mass"), rows)


def write_curves_csv(path, rows):
    _write_rows(path, ("beta", "cfdr", "cfnr", "measure"),
                ((repr(r["beta"]), repr(r["cfdr"]), repr(r["cfnr"]), r["measure"]) for r in rows))


def write_table_csv(path, rows):
    if not rows:
        _write_rows(path, (), ())
        return
    header = list(rows[0])
    _write_rows(path, header, ([_cell(r[h]) for h in header] for r in rows))


def _cell(v):
    if isinstance(v, (list, tuple)):
        return ";".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return v


def write_chain_csv(path, chain):
    cols = chain.columns()
    header = list(cols)
    data = np.column_stack([cols[h] for h in header])
    _write_rows(path, header, ([repr(float(x)) for x in row] for row in data))


def mv_chain_to_dict(chain, max_draws=None):
    idx = np.arange(len(chain))
    if max_draws is not None and len(chain) > max_draws:
        idx = np.round(np.linspace(0, len(chain) - 1, max_draws)).astype(int)
    g = chain.grid
    return {
        "dim": chain.K,
        "n_total": chain.n_total,
        "n_burnin": chain.n_burnin,
        "acceptance_rates": chain.acceptance_rates,
        "pd_failures": chain.pd_failures,
        "nugget": chain.nugget,
        "grid": {
            "points": g.points.tolist(),
            "seed": g.seed,
            "value_range": list(g.value_range),
            "horizon": g.horizon,
        },
        "segment": chain.segment.to_dict() if chain.segment is not None else None,
        "draw_index": idx.tolist(),
        "B": chain.B[idx].tolist(),
        "Sigma_f": chain.Sigma_f[idx].tolist(),
        "Sigma_eps": chain.Sigma_eps[idx].tolist(),
        "r": chain.r[idx].tolist(),
        "D": chain.D[idx].tolist(),
        "log_lik": chain.log_lik[idx].tolist(),
    }


def write_mv_chain_json(path, chain, max_draws=None):
    write_json(path, mv_chain_to_dict(chain, max_draws))


def read_mv_chain_json(path):
    d = read_json(path)
    try:
        g = d["grid"]
        grid = DesignGrid(np.asarray(g["points"]), g["seed"], tuple(g["value_range"]), g["horizon"])
        seg = d.get("segment")
        segment = None
        if seg is not None:
            segment = MvDataSegment(seg["x_prev0"], seg["values"], seg["t_first"], seg["horizon"])
        arr = {k: np.asarray(d[k], dtype=float) for k in ("B", "Sigma_f", "Sigma_eps", "r", "D", "log_lik")}
        chain = MvChainOutput(
            arr["B"], arr["Sigma_f"], arr["Sigma_eps"], arr["r"], arr["D"], arr["log_lik"],
            d["n_total"], d["n_burnin"], d["acceptance_rates"], d["pd_failures"],
            grid, segment, d["nugget"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a multivariate chain file ({exc})") from None
    if chain.K != int(d.get("dim", chain.K)):
        raise InputError(f"{path}: dim field disagrees with stored arrays")
    return chain
