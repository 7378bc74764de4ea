"""Model scoring (SIC, probability MAE), rolling-window coverage, and the theta grid search."""

from __future__ import annotations

import csv
import functools
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from ._parallel import pmap
from .core import (DesignMatrix, QuantileGrid, TimeSeries, apply_norm, build_lag_matrix, derive_seed,
                   lag_vector, pinball)
from .errors import DomainError, InsufficientDataError, MqrError, SolverFailure, TooManyFailuresError
from .mqr import MqrModel, QuantileFan, RegPair, SolverOptions, estimate, predict_fan
from .scenario import quantiles_from_paths, sample_paths

log = logging.getLogger(__name__)

ZERO_TOL = 1e-6
MAX_FAILURE_RATE = 0.05
EXTREME_ALPHAS = (0.05, 0.10, 0.15, 0.85, 0.90, 0.95)


def sic_from_residuals(residuals, alphas, zero_tol: float = ZERO_TOL) -> float:
    """SIC of a residual matrix (rows x levels).

    Each level contributes ``log(sum of check losses)`` plus
    ``log(T) * (elbow count at that level) / (2T)``, where elbow members are
    residuals within ``zero_tol`` of zero.
    """
    R = np.atleast_2d(np.asarray(residuals, dtype=float))
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    if R.shape[1] != a.size:
        R = R.T if R.shape[0] == a.size else R
    if R.shape[1] != a.size:
        raise DomainError("residual columns must match the quantile levels")
    T = R.shape[0]
    losses = pinball(a, R).sum(axis=0)
    if np.any(losses <= 0):
        warnings.warn("check-loss sum is zero at some level; SIC is -inf", RuntimeWarning, stacklevel=2)
        return -math.inf
    elbow = (np.abs(R) <= zero_tol).sum(axis=0)
    return float(np.sum(np.log(losses) + math.log(T) * elbow / (2 * T)))


def residuals(model: MqrModel, data: DesignMatrix) -> np.ndarray:
    return data.targets[:, None] - model.quantiles(apply_norm(data.rows, model.norm_stats))


def sic(model: MqrModel, data: DesignMatrix, zero_tol: float = ZERO_TOL) -> float:
    """SIC of ``model`` on its raw training sample ``data``."""
    return sic_from_residuals(residuals(model, data), model.grid.alphas, zero_tol)


def probability_mae(fj, grid) -> float:
    alphas = QuantileGrid.coerce(grid).alphas
    f = np.asarray(fj, dtype=float).reshape(-1)
    if f.size != alphas.size:
        raise DomainError(f"{f.size} frequencies for {alphas.size} levels")
    if np.any((f < 0) | (f > 1)):
        raise DomainError("frequencies must lie in [0, 1]")
    return float(np.mean(np.abs(alphas - f)))


def extreme_mae(fj, grid, levels: Sequence[float] = EXTREME_ALPHAS) -> float:
    """Probability MAE restricted to the grid levels that belong to ``levels``."""
    alphas = QuantileGrid.coerce(grid).alphas
    f = np.asarray(fj, dtype=float)
    keep = np.isclose(alphas[:, None], np.asarray(levels)[None, :], atol=1e-12).any(axis=1)
    if not keep.any():
        return math.nan
    return float(np.mean(np.abs(alphas[keep] - f[keep])))


# rolling windows -----------------------------------------------------------

def evaluation_indices(n: int, window: int, n_windows: int, horizon: int, max_lag: int) -> np.ndarray:
    """Series positions of the last ``n_windows`` forecast origins.

    At origin ``tau`` the model is fitted on targets ``tau-(window-1) .. tau-1``
    and scored on ``y[tau + horizon - 1]``.
    """
    if window < 2 or n_windows < 1 or horizon < 1:
        raise DomainError("window must be >= 2, n_windows >= 1 and horizon >= 1")
    last = n - horizon
    first = last - n_windows + 1
    if first - (window - 1) < max_lag:
        need = max_lag + window - 1 + n_windows + horizon - 1
        raise InsufficientDataError(
            f"series of length {n} too short: need {need} for window {window}, "
            f"{n_windows} windows, horizon {horizon} and max lag {max_lag}"
        )
    return np.arange(first, last + 1)


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 1000
    seed: int = 0
    clamp: tuple[float, float] | None = None
    pooled: bool = False


@dataclass(frozen=True, eq=False)
class WindowRecord:
    tau: int
    y_true: float
    fan: np.ndarray
    flags: np.ndarray
    losses: np.ndarray
    sic: float = math.nan


def forecast_fan(model: MqrModel, history: np.ndarray, horizon: int, sim: SimConfig, seed: int) -> QuantileFan:
    """Fan for ``horizon`` steps after ``history``: direct for one step, simulated beyond."""
    if horizon == 1:
        return predict_fan(model, lag_vector(history, model.lags or ()))
    scen = sample_paths(model, history, horizon, sim.n_paths, seed, clamp=sim.clamp, pooled=sim.pooled)
    return quantiles_from_paths(scen, model.grid, horizon)


def score_forecast(model: MqrModel, history: np.ndarray, y_true: float, horizon: int,
                   sim: SimConfig = SimConfig(), seed: int = 0, tau: int = -1) -> WindowRecord:
    fan = forecast_fan(model, history, horizon, sim, seed)
    flags = y_true <= fan.values
    losses = pinball(model.grid.alphas, y_true - fan.values)
    return WindowRecord(tau, float(y_true), fan.values, flags, losses)


def _one_window(tau: int, *, dm: DesignMatrix, y: np.ndarray, lags, grid, theta, window, horizon,
                sim: SimConfig, opts: SolverOptions, with_sic: bool):
    lo = tau - (window - 1)
    sel = (dm.index >= lo) & (dm.index <= tau - 1)
    train = dm.subset(sel)
    try:
        model = estimate(train, grid, theta, lags=lags, opts=opts)
    except SolverFailure as exc:
        return tau, str(exc)
    rec = score_forecast(model, y[:tau], y[tau + horizon - 1], horizon, sim, derive_seed(sim.seed, tau), tau)
    if with_sic:
        rec = WindowRecord(rec.tau, rec.y_true, rec.fan, rec.flags, rec.losses, sic(model, train))
    return rec


@dataclass(frozen=True, eq=False)
class RollingResult:
    grid: QuantileGrid
    theta: RegPair
    horizon: int
    records: list[WindowRecord]
    failed: list[tuple[int, str]] = field(default_factory=list)

    @property
    def flags(self) -> np.ndarray:
        return np.array([r.flags for r in self.records], dtype=float).reshape(-1, len(self.grid))

    @property
    def fj(self) -> np.ndarray:
        return self.flags.mean(axis=0)

    @property
    def mae(self) -> float:
        return probability_mae(self.fj, self.grid)

    @property
    def mae_extreme(self) -> float:
        return extreme_mae(self.fj, self.grid)

    @property
    def mean_pinball(self) -> float:
        return float(np.mean([r.losses.sum() for r in self.records]))


def rolling_forecast(series: TimeSeries, lags: Sequence[int], grid: QuantileGrid, theta: RegPair, window: int,
                     taus: Sequence[int], horizon: int = 1, sim: SimConfig = SimConfig(),
                     opts: SolverOptions = SolverOptions(), workers: int = 1,
                     with_sic: bool = False) -> RollingResult:
    """Refit on a sliding window at every origin in ``taus`` and score the forecasts.

    Windows whose LP fails are skipped (and listed in ``failed``); more than
    5% failures raise ``TooManyFailuresError``.
    """
    grid = QuantileGrid.coerce(grid)
    lags = tuple(int(l) for l in lags)
    taus = [int(t) for t in taus]
    if not taus:
        raise DomainError("no evaluation origins")
    y = series.values
    max_lag = max(lags, default=0)
    if min(taus) - (window - 1) < max_lag or max(taus) + horizon - 1 >= y.size:
        raise InsufficientDataError("evaluation origins fall outside the usable part of the series")
    dm = build_lag_matrix(series, lags)
    job = functools.partial(_one_window, dm=dm, y=y, lags=lags, grid=grid, theta=theta, window=window,
                            horizon=horizon, sim=sim, opts=opts, with_sic=with_sic)
    out = pmap(job, taus, workers)
    records = [r for r in out if isinstance(r, WindowRecord)]
    failed = [r for r in out if not isinstance(r, WindowRecord)]
    if failed:
        warnings.warn(f"{len(failed)} of {len(taus)} windows failed and were skipped", RuntimeWarning, stacklevel=2)
        if len(failed) > MAX_FAILURE_RATE * len(taus) or not records:
            raise TooManyFailuresError(len(failed), len(taus), MAX_FAILURE_RATE)
    return RollingResult(grid, theta, horizon, records, failed)


def empirical_fj(theta: RegPair, series: TimeSeries, lags: Sequence[int], grid: QuantileGrid, window: int,
                 eval_indices: Sequence[int], horizon: int = 1, sim: SimConfig = SimConfig(),
                 opts: SolverOptions = SolverOptions(), workers: int = 1) -> np.ndarray:
    """Coverage frequency of each forecast quantile over the evaluation origins."""
    return rolling_forecast(series, lags, grid, theta, window, eval_indices, horizon, sim, opts, workers).fj


# grid search ---------------------------------------------------------------

@dataclass(frozen=True)
class ThetaGrid:
    lambdas: tuple[float, ...]
    gammas: tuple[float, ...]

    def __post_init__(self):
        for name in ("lambdas", "gammas"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise DomainError(f"{name} must not be empty")
            if any(not np.isfinite(v) or v < 0 for v in vals):
                raise DomainError(f"{name} must be finite and non-negative")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise DomainError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)

    def cells(self) -> list[RegPair]:
        return [RegPair(l, g) for l in self.lambdas for g in self.gammas]


@dataclass(frozen=True)
class CalibrationContext:
    """Data and protocol shared by every grid cell."""

    series: TimeSeries
    lags: tuple[int, ...]
    grid: QuantileGrid
    window: int
    n_windows: int
    horizon: int = 1
    sim: SimConfig = SimConfig()

    def taus(self) -> np.ndarray:
        return evaluation_indices(len(self.series), self.window, self.n_windows, self.horizon,
                                  max(self.lags, default=0))

    def training_sample(self) -> DesignMatrix:
        """Training rows of the first evaluation window (the sample SIC is scored on)."""
        tau = int(self.taus()[0])
        dm = build_lag_matrix(self.series, self.lags)
        return dm.subset((dm.index >= tau - (self.window - 1)) & (dm.index <= tau - 1))


@dataclass(frozen=True, eq=False)
class CalibrationRow:
    theta: RegPair
    sic: float = math.nan
    mae: float = math.nan
    fj: np.ndarray | None = None
    error: str = ""


@dataclass(frozen=True, eq=False)
class CalibrationReport:
    rows: list[CalibrationRow]
    best_by_sic: RegPair | None
    best_by_mae: RegPair | None
    horizon: int = 1

    def row(self, theta: RegPair) -> CalibrationRow:
        for r in self.rows:
            if r.theta == theta:
                return r
        raise KeyError(theta)


def _argmin(rows: list[CalibrationRow], key: str) -> RegPair | None:
    # rows arrive sorted by (lambda, gamma); a strict comparison keeps the first minimum
    best, best_val = None, math.inf
    for r in rows:
        v = getattr(r, key)
        if not math.isnan(v) and (best is None or v < best_val):
            best, best_val = r.theta, v
    return best


def _score_cell(theta: RegPair, *, ctx: CalibrationContext, metric: str, opts: SolverOptions) -> CalibrationRow:
    s, m, fj = math.nan, math.nan, None
    try:
        if metric in ("sic", "both"):
            train = ctx.training_sample()
            model = estimate(train, ctx.grid, theta, lags=ctx.lags, opts=opts)
            s = sic(model, train)
        if metric in ("mae", "both"):
            res = rolling_forecast(ctx.series, ctx.lags, ctx.grid, theta, ctx.window, ctx.taus(), ctx.horizon,
                                   ctx.sim, opts)
            fj = res.fj
            m = res.mae
    except (SolverFailure, TooManyFailuresError) as exc:
        return CalibrationRow(theta, error=str(exc))
    return CalibrationRow(theta, s, m, fj)


def grid_search(theta_grid: ThetaGrid, metric: Literal["sic", "mae", "both"], context: CalibrationContext,
                opts: SolverOptions = SolverOptions(), workers: int = 1) -> CalibrationReport:
    """Score every (lambda, gamma) cell and pick the best cell per computed metric.

    Ties go to the smaller lambda, then the smaller gamma.
    """
    if metric not in ("sic", "mae", "both"):
        raise DomainError(f"unknown metric {metric!r}")
    cells = theta_grid.cells()
    job = functools.partial(_score_cell, ctx=context, metric=metric, opts=opts)
    rows = pmap(job, cells, workers)
    if all(r.error for r in rows):
        raise MqrError(f"all {len(rows)} grid cells failed; first error: {rows[0].error}")
    for r in rows:
        if r.error:
            log.warning("cell lambda=%g gamma=%g failed: %s", r.theta.lam, r.theta.gamma, r.error)
    return CalibrationReport(rows, _argmin(rows, "sic"), _argmin(rows, "mae"), context.horizon)


def write_heatmap_csv(report: CalibrationReport, path) -> None:
    """One row per cell per computed metric; MAE in percent."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "gamma", "metric", "value"])
        for r in report.rows:
            if not math.isnan(r.sic):
                w.writerow([repr(r.theta.lam), repr(r.theta.gamma), "sic", repr(r.sic)])
            if not math.isnan(r.mae):
                w.writerow([repr(r.theta.lam), repr(r.theta.gamma), "mae_percent", repr(100 * r.mae)])


def report_rows(report: CalibrationReport) -> list[dict]:
    """Summary rows shaped like (model, horizon, lambda, gamma, sic, mae_percent)."""
    out = []

    def add(name: str, theta: RegPair):
        r = report.row(theta)
        out.append({"model": name, "horizon": report.horizon, "lambda": theta.lam, "gamma": theta.gamma,
                    "sic": r.sic, "mae_percent": 100 * r.mae})

    if report.best_by_sic is not None:
        add(f"{report.best_by_sic.label} (SIC)", report.best_by_sic)
    if report.best_by_mae is not None:
        add(f"{report.best_by_mae.label} (MAE)", report.best_by_mae)
    b1 = RegPair(0.0, 0.0)
    if any(r.theta == b1 for r in report.rows):
        add("MQR-B1", b1)
    return out


REPORT_COLUMNS = ["model", "horizon", "lambda", "gamma", "sic", "mae_percent"]


def write_report_csv(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
