"""Batch command-line front end.

Exit codes: 0 success, 2 input error, 3 chain failure, 4 mode misuse.
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import load_run_config
from .errors import ChainFailure, ClimGPError, InputError, ModeMisuse
from .gp import build_design_grid, derive_prior_config
from .ingest import (
    build_aligned_dataset,
    convert_to_log_celsius,
    dataset_from_dict,
    dataset_to_dict,
    load_manifest,
)
from .mcmc import DataSegment, run_chain
from .mvgp import (
    MvChainConfig,
    MvDataSegment,
    build_mv_grid,
    derive_mv_prior_config,
    ensemble_inverse_posterior,
    mv_run_chain,
)
from .posteriors import (
    equal_tailed,
    goodness_of_fit,
    sample_forward_posterior,
    sample_inverse_posterior,
    summarize_paths,
)
from .selection import MEASURES, run_selection

log = logging.getLogger("climgp")

EXIT_OK, EXIT_INPUT, EXIT_CHAIN, EXIT_MODE = 0, 2, 3, 4
ENSEMBLE_MODES = ("ensemble-mean", "ensemble-max")


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _config(args):
    overrides = {"seed": args.seed}
    if getattr(args, "manifest", None):
        overrides["manifest"] = args.manifest
    return load_run_config(args.config, args.profile, overrides)


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(args, cfg):
    if getattr(args, "dataset", None):
        try:
            return dataset_from_dict(io.read_json(args.dataset))
        except (KeyError, TypeError) as exc:
            raise InputError(f"{args.dataset}: not a dataset file ({exc})") from None
    manifest = getattr(args, "manifest", None) or cfg.manifest
    if not manifest:
        raise InputError("one of --dataset or --manifest is required")
    observed, models, origin = load_manifest(manifest)
    if observed is None:
        raise InputError(f"{manifest}: no observed series")
    return build_aligned_dataset(observed, models, origin)


def _cap_models(ds, cfg):
    cap = cfg.max_models
    if cap is None or ds.K <= cap:
        return ds
    log.warning("%s profile keeps the first %d of %d models", cfg.profile, cap, ds.K)
    return build_aligned_dataset(ds.observed, ds.models[:cap], ds.origin_year)


def _chain_seed(cfg, tag):
    return np.random.SeedSequence([cfg.seed, tag])


def _grid(cfg, horizon):
    return build_design_grid(cfg.grid_n, cfg.value_range, cfg.grid_seed, horizon)


def _fit(segment, series, cfg, tag, label):
    prior = derive_prior_config(series)
    try:
        return run_chain(segment, prior, _grid(cfg, segment.horizon), cfg.n_total, cfg.n_burnin,
                         seed=_chain_seed(cfg, tag))
    except (ClimGPError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise ChainFailure(label, exc) from exc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ingest(args):
    cfg = _config(args)
    ds = _load_dataset(args, cfg)
    out = _out_dir(args)
    io.write_json(out / "dataset.json", dataset_to_dict(ds), timestamp=False)
    log.info("dataset: K=%d, T0=%d, T=%d, origin %d", ds.K, ds.T0, ds.T, ds.origin_year)
    return EXIT_OK


def cmd_select(args):
    cfg = _config(args)
    ds = _cap_models(_load_dataset(args, cfg), cfg)
    if ds.K < 2:
        raise InputError("select needs at least two model series")
    report = run_selection(ds, cfg.selection_config(keep_chains=args.dump_chain))
    out = _out_dir(args)
    payload = report.to_dict()
    payload["config"] = cfg.to_dict()
    io.write_json(out / "selection.json", payload)
    measures = MEASURES if args.measure == "both" else (args.measure,)
    io.write_curves_csv(out / "curves.csv", [r for r in report.curve_rows() if r["measure"] in measures])
    io.write_table_csv(out / "gof_table.csv", report.gof_table())
    if args.dump_chain:
        for k, fit in enumerate(report.fits, start=1):
            io.write_chain_csv(out / f"chain_model_{k}.csv", fit.chain)
    for m in measures:
        best = payload["best_model"][m]
        print(f"{m}: best model {best['index']} ({best['label']}), v = {best['v']:.6g}, "
              f"first jump at beta = {best['first_jump']}")
    return EXIT_OK


def _resolve_model(arg, ds):
    if arg in ("averaged",) + ENSEMBLE_MODES:
        return arg
    try:
        k = int(arg)
    except ValueError:
        raise InputError(f"--model must be an index, 'averaged', 'ensemble-mean' or 'ensemble-max'; got {arg!r}") from None
    if not 1 <= k <= ds.K:
        raise InputError(f"--model {k} outside 1..{ds.K}")
    return k


def cmd_invert(args):
    cfg = _config(args)
    ds = _load_dataset(args, cfg)
    mode = _resolve_model(args.model, ds)
    x0, observed = ds.observed_segment()
    if mode in ENSEMBLE_MODES:
        if not args.mv_chain:
            raise ModeMisuse(f"--model {mode} needs a multivariate chain (--mv-chain from mv-fit)")
        chain = io.read_mv_chain_json(args.mv_chain)
        paths = ensemble_inverse_posterior(
            x0, ds.T0, chain, mode.split("-")[1], cfg.n_paths, _chain_seed(cfg, 7), ds.origin_year
        )
    else:
        series = ds.averaged if mode == "averaged" else ds.models[mode - 1]
        x_prev, future = ds.future_segment(series)
        segment = DataSegment(x_prev, future, ds.T0 + 1, ds.horizon)
        chain = _fit(segment, series, cfg, 1, series.label or str(mode))
        paths = sample_inverse_posterior(x0, ds.T0, chain, cfg.n_paths, _chain_seed(cfg, 2),
                                         origin_year=ds.origin_year)
    summary = summarize_paths(paths, alpha=cfg.alpha)
    gof = goodness_of_fit(paths, observed, cfg.alpha, cfg.c, summary)
    out = _out_dir(args)
    io.write_json(out / "invert.json", {
        "mode": str(mode),
        "summary": summary.to_dict(),
        "gof": gof.to_dict(),
        "config": cfg.to_dict(),
    })
    io.write_density_csv(out / "density.csv", summary)
    row = {"model": str(mode)}
    row.update(gof.to_dict())
    io.write_table_csv(out / "gof.csv", [row])
    if args.dump_chain and mode not in ENSEMBLE_MODES:
        io.write_chain_csv(out / "chain.csv", chain)
    print(f"S1 {gof.measures['s1'].verdict}, S2 {gof.measures['s2'].verdict}")
    return EXIT_OK


def _forecast_axis(args, cfg):
    """Observed series plus whatever model series exist, on one axis."""
    if getattr(args, "dataset", None):
        ds = _load_dataset(args, cfg)
        return ds.observed, ds.models, ds.T0, ds.T, ds.origin_year
    manifest = getattr(args, "manifest", None) or cfg.manifest
    if not manifest:
        raise InputError("one of --dataset or --manifest is required")
    observed, models, origin = load_manifest(manifest)
    if observed is None:
        raise InputError(f"{manifest}: forecast needs an observed series")
    if models:
        ds = build_aligned_dataset(observed, models, origin)
        return ds.observed, ds.models, ds.T0, ds.T, ds.origin_year
    if cfg.forecast_end_year is None:
        raise InputError("without model series, set forecast_end_year in the config")
    obs = convert_to_log_celsius(observed)
    origin = obs.start_year if origin is None else int(origin)
    T0 = obs.end_year - origin
    T = int(cfg.forecast_end_year) - origin
    if T <= T0:
        raise InputError("forecast_end_year must follow the last observed year")
    return obs, (), T0, T, origin


def cmd_forecast(args):
    cfg = _config(args)
    observed, models, T0, T, origin = _forecast_axis(args, cfg)
    horizon = T + 1
    x = observed.at_years(origin, origin + T0)
    segment = DataSegment(x[0], x[1:], 1, horizon, first_step_marginal=True)
    chain = _fit(segment, observed, cfg, 3, observed.label or "observed")
    paths = sample_forward_posterior(x[-1], T0, T, chain, cfg.n_paths, _chain_seed(cfg, 4),
                                     origin_year=origin)
    summary = summarize_paths(paths, alpha=cfg.alpha)
    lo_c, hi_c = equal_tailed(paths.draws, 1.0 - cfg.forecast_level)
    band = np.log(np.asarray(cfg.benchmark_celsius, dtype=float))
    rows = []
    model_vals = []
    for m in models:
        first, last = max(m.start_year, origin + T0 + 1), min(m.end_year, origin + T)
        model_vals.append((m, first, last))
    for j, year in enumerate(summary.years):
        row = {
            "year": int(year),
            "mode": float(summary.mode[j]),
            "mean": float(summary.mean[j]),
            "lower_central": float(lo_c[j]),
            "upper_central": float(hi_c[j]),
            "lower": float(summary.lower[j]),
            "upper": float(summary.upper[j]),
            "benchmark_lower": float(band[0]),
            "benchmark_upper": float(band[1]),
            "central_contains_benchmark": bool(lo_c[j] <= band[0] and hi_c[j] >= band[1]),
            "central_overlaps_benchmark": bool(lo_c[j] <= band[1] and hi_c[j] >= band[0]),
        }
        for k, (m, first, last) in enumerate(model_vals, start=1):
            if first <= year <= last:
                v = float(m.x[year - m.start_year])
                row[f"model_{k}"] = v
                row[f"model_{k}_inside"] = bool(summary.lower[j] <= v <= summary.upper[j])
            else:
                row[f"model_{k}"] = None
                row[f"model_{k}_inside"] = None
        rows.append(row)
    out = _out_dir(args)
    io.write_json(out / "forecast.json", {
        "summary": summary.to_dict(),
        "forecast_level": cfg.forecast_level,
        "benchmark_log_band": band.tolist(),
        "model_labels": [m.label for m in models],
        "comparison": rows,
        "config": cfg.to_dict(),
    })
    io.write_density_csv(out / "density.csv", summary)
    io.write_table_csv(out / "forecast_table.csv", rows)
    if args.dump_chain:
        io.write_chain_csv(out / "chain.csv", chain)
    n_in = sum(r["central_contains_benchmark"] for r in rows)
    print(f"benchmark band inside the central {cfg.forecast_level:.0%} interval in {n_in}/{len(rows)} years")
    return EXIT_OK


def cmd_mv_fit(args):
    cfg = _config(args)
    ds = _cap_models(_load_dataset(args, cfg), cfg)
    first = ds.models[0].start_year
    Xm = ds.model_matrix()
    i0 = ds.year(ds.T0) - first
    if i0 < 0:
        raise InputError("model series must cover the last observed year")
    segment = MvDataSegment(Xm[i0], Xm[i0 + 1:], ds.T0 + 1, ds.horizon)
    prior = derive_mv_prior_config(ds.models)
    grid = build_mv_grid(ds.K, cfg.grid_n, cfg.mv_value_range, cfg.grid_seed, ds.horizon)
    try:
        chain = mv_run_chain(segment, prior, grid, MvChainConfig(cfg.mv_n_total, cfg.mv_n_burnin),
                             seed=_chain_seed(cfg, 5))
    except (ClimGPError, np.linalg.LinAlgError) as exc:
        raise ChainFailure("ensemble", exc) from exc
    out = _out_dir(args)
    io.write_mv_chain_json(out / "mv_chain.json", chain, cfg.mv_keep_draws)
    io.write_json(out / "mv_summary.json", {
        "dim": chain.K,
        "labels": [m.label for m in ds.models],
        "acceptance_rates": chain.acceptance_rates,
        "pd_failures": chain.pd_failures,
        "posterior_mean": {
            "B": chain.B.mean(axis=0),
            "Sigma_f": chain.Sigma_f.mean(axis=0),
            "Sigma_eps": chain.Sigma_eps.mean(axis=0),
            "r": chain.r.mean(axis=0),
        },
        "prior": prior.to_dict(),
        "config": cfg.to_dict(),
    })
    print(f"multivariate chain (K={chain.K}) written to {out / 'mv_chain.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="climgp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=True):
        p.add_argument("--manifest", help="series manifest (JSON)")
        if dataset:
            p.add_argument("--dataset", help="dataset JSON written by 'ingest'")
        p.add_argument("--config", help="run configuration (JSON)")
        p.add_argument("--profile", choices=("paper", "desk"))
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--dump-chain", action="store_true", help="also write retained chain draws")

    p = sub.add_parser("ingest", help="convert and align series")
    common(p, dataset=False)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("select", help="Bayesian multiple testing over the models")
    common(p)
    p.add_argument("--measure", choices=("s1", "s2", "both"), default="both")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("invert", help="inverse posterior of the observed period")
    common(p)
    p.add_argument("--model", default="averaged", help="k | averaged | ensemble-mean | ensemble-max")
    p.add_argument("--mv-chain", help="multivariate chain JSON written by 'mv-fit'")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("forecast", help="forward posterior beyond the observed period")
    common(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("mv-fit", help="fit the multivariate model to the ensemble")
    common(p)
    p.set_defaults(func=cmd_mv_fit)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ChainFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHAIN
    except ModeMisuse as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODE
    except ClimGPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
