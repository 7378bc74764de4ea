"""``mqrlr`` command line: synth, estimate, calibrate, simulate, backtest, ar1study.

Settings come from flags, then an optional JSON config file (``--config``),
then built-in defaults. The config file is a flat JSON object whose keys are
the long flag names with dashes replaced by underscores, for example::

    {"lags": [1, 2], "lambdas": [0, 1, 20], "gammas": [0, 1, 7],
     "window": 240, "n_windows": 100, "seed": 3}

The output directory is ``--out``, else ``$MQRLR_OUT``, else the config
``out`` key, else ``./out``. Exit status: 0 on success, 2 on invalid input,
3 when solves fail (including more than 5% of windows failing).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from . import calibrate as cal
from . import evalharness as ev
from .core import QuantileGrid, build_lag_matrix, normalize, read_series_csv, write_series_csv
from .errors import (DomainError, InputFormatError, InsufficientDataError, MqrError, SolverFailure,
                     TooManyFailuresError)
from .lpsolve import DEFAULT_FEAS_TOL, DEFAULT_OPT_TOL, METHODS, dump_lp
from .mqr import RegPair, SolverOptions, build_lp, coefficient_rows, estimate, load_model, save_model
from .scenario import quantiles_from_paths, sample_paths, write_fans_csv, write_scenarios_csv

OUT_ENV = "MQRLR_OUT"

# desk-scale defaults; full scale is window=720, n_windows=500, replications=1000
DEFAULTS = {
    "seed": 0,
    "out": "out",
    "feas_tol": DEFAULT_FEAS_TOL,
    "opt_tol": DEFAULT_OPT_TOL,
    "threads": 1,
    "method": "auto",
    "grid": None,
    "lags": [1],
    "lam": 0.0,
    "gamma": 0.0,
    "lambdas": [0.0, 0.13, 1.0, 2.5, 3.25, 6.75, 20.0],
    "gammas": [0.0, 1.0, 7.0],
    "metric": "both",
    "window": 240,
    "n_windows": 100,
    "horizon": 1,
    "steps": 1,
    "paths": 1000,
    "clamp": None,
    "pooled": False,
    "beta0": 0.0,
    "beta1": 0.3,
    "sigma": 1.0,
    "n": 400,
    "replications": 200,
    "gamma_grid": list(ev.DEFAULT_GAMMA_GRID),
    "input": None,
    "model": None,
    "history": None,
    "dump_lp": None,
}


class UsageError(MqrError, ValueError):
    pass


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", type=Path, help="JSON file with default settings")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help=f"output directory (overridden by ${OUT_ENV})")
    g.add_argument("--feas-tol", type=float)
    g.add_argument("--opt-tol", type=float)
    g.add_argument("--threads", type=int, help="worker processes for windows, cells and replications")
    g.add_argument("--method", choices=METHODS, help="LP solver route")
    g.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--input", type=Path, help="series CSV with a 'value' column")
    model.add_argument("--lags", type=_ints, help="comma-separated lags, e.g. 1,2,24")
    model.add_argument("--grid", type=_floats, help="comma-separated quantile levels (default 0.05..0.95)")

    theta = argparse.ArgumentParser(add_help=False)
    theta.add_argument("--lam", type=float, help="lasso weight lambda")
    theta.add_argument("--gamma", type=float, help="curvature weight gamma")

    rolling = argparse.ArgumentParser(add_help=False)
    rolling.add_argument("--window", type=int, help="training window H")
    rolling.add_argument("--n-windows", type=int, help="number of evaluation origins")
    rolling.add_argument("--horizon", type=int, help="forecast step K")
    rolling.add_argument("--paths", type=int, help="simulated paths for horizons above 1")

    p = argparse.ArgumentParser(prog="mqrlr", description="Multiple quantile regression with adaptive lasso "
                                "and curvature penalties: fitting, calibration, simulation and evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a simulated AR(1) series")
    s.add_argument("--beta0", type=float)
    s.add_argument("--beta1", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--n", type=int)

    e = sub.add_parser("estimate", parents=[common, model, theta], help="fit one model")
    e.add_argument("--dump-lp", type=Path, help="also write the final estimation LP as text")

    c = sub.add_parser("calibrate", parents=[common, model, rolling], help="grid search over (lambda, gamma)")
    c.add_argument("--lambdas", type=_floats)
    c.add_argument("--gammas", type=_floats)
    c.add_argument("--metric", choices=["sic", "mae", "both"])

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo paths from a fitted model")
    m.add_argument("--model", type=Path, help="model file written by 'estimate'")
    m.add_argument("--history", type=Path, help="series CSV whose end seeds the lags")
    m.add_argument("--steps", type=int, help="path length K")
    m.add_argument("--paths", type=int, help="number of paths S")
    m.add_argument("--clamp", type=float, nargs=2, metavar=("LO", "HI"))
    m.add_argument("--pooled", action="store_true", default=None,
                   help="average the fans of all paths at each step instead of per-path inversion")

    b = sub.add_parser("backtest", parents=[common, model, theta, rolling], help="rolling-origin backtest")
    b.add_argument("--clamp", type=float, nargs=2, metavar=("LO", "HI"))

    a = sub.add_parser("ar1study", parents=[common], help="AR(1) slope-recovery study")
    a.add_argument("--beta0", type=float)
    a.add_argument("--beta1", type=float)
    a.add_argument("--sigma", type=float)
    a.add_argument("--n", type=int)
    a.add_argument("--replications", type=int)
    a.add_argument("--gamma-grid", type=_floats)
    a.add_argument("--grid", type=_floats)
    return p


def _settings(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over defaults."""
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputFormatError(f"{args.config}: cannot read config ({exc})") from exc
        if not isinstance(file_cfg, dict):
            raise InputFormatError(f"{args.config}: config must be a JSON object")
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise InputFormatError(f"{args.config}: unknown keys {sorted(unknown)}")
    cfg = {**DEFAULTS, **file_cfg}
    for k, v in vars(args).items():
        if k in DEFAULTS and v is not None:
            cfg[k] = v
    if os.environ.get(OUT_ENV) and args.out is None:
        cfg["out"] = os.environ[OUT_ENV]
    return cfg


def _opts(cfg: dict) -> SolverOptions:
    for k in ("feas_tol", "opt_tol"):
        if not 0 < float(cfg[k]) < 1:
            raise UsageError(f"{k.replace('_', '-')} must lie in (0, 1)")
    return SolverOptions(float(cfg["feas_tol"]), float(cfg["opt_tol"]), str(cfg["method"]))


def _grid(cfg: dict) -> QuantileGrid:
    return QuantileGrid.default() if cfg["grid"] is None else QuantileGrid(cfg["grid"])


def _workers(cfg: dict) -> int:
    n = int(cfg["threads"])
    if n < 1:
        raise UsageError("--threads must be at least 1")
    return n


def _need(cfg: dict, key: str) -> Path:
    if cfg[key] is None:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return Path(cfg[key])


def _clamp(cfg: dict):
    if cfg["clamp"] is None:
        return None
    lo, hi = (float(v) for v in cfg["clamp"])
    if not lo <= hi:
        raise UsageError("--clamp needs LO <= HI")
    return lo, hi


def _write_rows(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(cfg: dict) -> list[Path]:
    study = ev.Ar1StudyConfig(beta0=float(cfg["beta0"]), beta1=float(cfg["beta1"]), sigma=float(cfg["sigma"]),
                              n=int(cfg["n"]), replications=1, seed=int(cfg["seed"]))
    series = ev.generate_ar1(study, 0)
    path = _outdir(cfg) / "series.csv"
    write_series_csv(series, path)
    return [path]


def cmd_estimate(cfg: dict) -> list[Path]:
    grid, opts, lags = _grid(cfg), _opts(cfg), [int(l) for l in cfg["lags"]]
    theta = RegPair(float(cfg["lam"]), float(cfg["gamma"]))
    series = read_series_csv(_need(cfg, "input"))
    data = build_lag_matrix(series, lags)
    model = estimate(data, grid, theta, lags=lags, opts=opts)
    out = _outdir(cfg)
    paths = [out / "model.json", out / "coefficients.csv"]
    save_model(model, paths[0])
    _write_rows(paths[1], ["alpha", "covariate", "value"],
                ([repr(a), name, repr(v)] for a, name, v in coefficient_rows(model)))
    if cfg["dump_lp"] is not None:
        z, _ = normalize(data)
        weights = model.weights_used if theta.lam > 0 else None
        dump_lp(build_lp(z, grid, theta, weights), cfg["dump_lp"])
        paths.append(Path(cfg["dump_lp"]))
    return paths


def cmd_calibrate(cfg: dict) -> list[Path]:
    grid, opts, lags = _grid(cfg), _opts(cfg), tuple(int(l) for l in cfg["lags"])
    theta_grid = cal.ThetaGrid(tuple(cfg["lambdas"]), tuple(cfg["gammas"]))
    series = read_series_csv(_need(cfg, "input"))
    ctx = cal.CalibrationContext(series, lags, grid, int(cfg["window"]), int(cfg["n_windows"]),
                                 int(cfg["horizon"]), cal.SimConfig(int(cfg["paths"]), int(cfg["seed"])))
    ctx.taus()  # validates the window layout before any fitting
    report = cal.grid_search(theta_grid, cfg["metric"], ctx, opts, _workers(cfg))
    out = _outdir(cfg)
    paths = [out / "heatmap.csv", out / "calibration_report.csv"]
    cal.write_heatmap_csv(report, paths[0])
    cal.write_report_csv(cal.report_rows(report), paths[1])
    return paths


def cmd_simulate(cfg: dict) -> list[Path]:
    model = load_model(_need(cfg, "model"))
    history = read_series_csv(_need(cfg, "history"))
    K, S = int(cfg["steps"]), int(cfg["paths"])
    scen = sample_paths(model, history, K, S, int(cfg["seed"]), clamp=_clamp(cfg), pooled=bool(cfg["pooled"]))
    fans = [quantiles_from_paths(scen, model.grid, k) for k in range(1, K + 1)]
    out = _outdir(cfg)
    paths = [out / "scenarios.csv", out / "fans.csv"]
    write_scenarios_csv(scen, paths[0])
    write_fans_csv(fans, paths[1])
    if scen.n_rearranged:
        logging.getLogger(__name__).info("%d crossed fans were sorted", scen.n_rearranged)
    return paths


def cmd_backtest(cfg: dict) -> list[Path]:
    bc = ev.BacktestConfig(window=int(cfg["window"]), n_windows=int(cfg["n_windows"]), horizon=int(cfg["horizon"]),
                           lags=tuple(int(l) for l in cfg["lags"]), grid=_grid(cfg),
                           theta=RegPair(float(cfg["lam"]), float(cfg["gamma"])), seed=int(cfg["seed"]),
                           n_paths=int(cfg["paths"]), clamp=_clamp(cfg))
    opts = _opts(cfg)
    series = read_series_csv(_need(cfg, "input"))
    report = ev.run_backtest(series, bc, opts, _workers(cfg))
    out = _outdir(cfg)
    paths = [out / "backtest.csv", out / "probprob.csv", out / "backtest_report.csv"]
    ev.write_backtest_csv(report, paths[0])
    ev.write_probprob_csv(report, paths[1])
    row = report.table_row()
    row["mae_extreme_percent"] = 100 * report.mae_extreme
    with paths[2].open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cal.REPORT_COLUMNS + ["mae_extreme_percent"], lineterminator="\n")
        w.writeheader()
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return paths


def cmd_ar1study(cfg: dict) -> list[Path]:
    study = ev.Ar1StudyConfig(beta0=float(cfg["beta0"]), beta1=float(cfg["beta1"]), sigma=float(cfg["sigma"]),
                              n=int(cfg["n"]), replications=int(cfg["replications"]),
                              gamma_grid=tuple(cfg["gamma_grid"]), seed=int(cfg["seed"]), grid=_grid(cfg))
    report = ev.run_ar1_study(study, _opts(cfg), _workers(cfg))
    out = _outdir(cfg)
    paths = [out / "ar1_slopes.csv", out / "ar1_summary.csv"]
    ev.write_slopes_csv(report, paths[0])
    ev.write_ar1_summary_csv(report, paths[1])
    return paths


COMMANDS = {
    "synth": cmd_synth,
    "estimate": cmd_estimate,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "backtest": cmd_backtest,
    "ar1study": cmd_ar1study,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = _settings(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default" if args.verbose else "ignore", RuntimeWarning)
            written = COMMANDS[args.command](cfg)
    except (SolverFailure, TooManyFailuresError) as exc:
        print(f"mqrlr {args.command}: {exc}", file=sys.stderr)
        return 3
    except (DomainError, InputFormatError, InsufficientDataError, UsageError, MqrError, ValueError) as exc:
        print(f"mqrlr {args.command}: {exc}", file=sys.stderr)
        return 2
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
