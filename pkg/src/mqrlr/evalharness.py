"""Rolling backtests and the controlled AR(1) coefficient-recovery study."""

from __future__ import annotations

import csv
import functools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._parallel import pmap
from .calibrate import (EXTREME_ALPHAS, RollingResult, SimConfig, evaluation_indices, extreme_mae,
                        probability_mae, rolling_forecast, sic)
from .core import DesignMatrix, QuantileGrid, TimeSeries, apply_norm, build_lag_matrix, pinball
from .errors import DomainError, InsufficientDataError, SolverFailure, TooManyFailuresError
from .mqr import RegPair, SolverOptions, estimate
from .normal import norm_ppf

log = logging.getLogger(__name__)

DEFAULT_GAMMA_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
N_FOLDS = 5


@dataclass(frozen=True)
class Ar1StudyConfig:
    beta0: float = 0.0
    beta1: float = 0.3
    sigma: float = 1.0
    n: int = 400
    replications: int = 200
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    seed: int = 0
    grid: QuantileGrid = field(default_factory=QuantileGrid.default)

    def __post_init__(self):
        if not abs(self.beta1) < 1:
            raise DomainError(f"|beta1| must be below 1 for a stationary AR(1), got {self.beta1}")
        if not (np.isfinite(self.beta0) and np.isfinite(self.sigma)) or self.sigma < 0:
            raise DomainError("beta0 must be finite and sigma finite and non-negative")
        if self.n < 50:
            raise DomainError(f"series length must be at least 50, got {self.n}")
        if self.replications < 1:
            raise DomainError("need at least one replication")
        gammas = tuple(float(g) for g in self.gamma_grid)
        if not gammas or any(not np.isfinite(g) or g < 0 for g in gammas):
            raise DomainError("gamma grid must be non-empty, finite and non-negative")
        object.__setattr__(self, "gamma_grid", gammas)
        object.__setattr__(self, "grid", QuantileGrid.coerce(self.grid))


def generate_ar1(cfg: Ar1StudyConfig, replication: int) -> TimeSeries:
    """``y_1..y_n`` of ``y_t = beta0 + beta1*y_{t-1} + sigma*e_t`` started from ``y_0 = 0``.

    Each replication draws from its own ``SeedSequence([seed, replication])``
    stream, so replications are independent and reproducible in any order.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), int(replication)]))
    eps = rng.standard_normal(cfg.n)
    y = np.empty(cfg.n)
    prev = 0.0
    for t in range(cfg.n):
        prev = cfg.beta0 + cfg.beta1 * prev + cfg.sigma * eps[t]
        y[t] = prev
    return TimeSeries(y)


def true_ar1_quantile(alpha: float, x_prev: float, beta0: float, beta1: float, sigma: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return beta0 + beta1 * x_prev + sigma * norm_ppf(alpha)


def _holdout_loss(model, test: DesignMatrix) -> float:
    q = model.quantiles(apply_norm(test.rows, model.norm_stats))
    return float(pinball(model.grid.alphas, test.targets[:, None] - q).sum())


def cv_gamma(data: DesignMatrix, grid: QuantileGrid, gammas: Sequence[float], n_folds: int = N_FOLDS,
             opts: SolverOptions = SolverOptions()) -> float:
    """Curvature weight with the lowest out-of-fold pinball loss over contiguous time blocks.

    The lasso weight is held at zero. Ties keep the smaller gamma.
    """
    if data.n_obs < 2 * n_folds:
        raise InsufficientDataError(f"{data.n_obs} rows are too few for {n_folds}-fold cross-validation")
    folds = np.array_split(np.arange(data.n_obs), n_folds)
    best, best_loss = None, math.inf
    for g in sorted(gammas):
        loss = 0.0
        for fold in folds:
            train = np.ones(data.n_obs, dtype=bool)
            train[fold] = False
            model = estimate(data.subset(train), grid, RegPair(0.0, g), opts=opts)
            loss += _holdout_loss(model, data.subset(~train))
        if loss < best_loss:
            best, best_loss = g, loss
    return best


@dataclass(frozen=True, eq=False)
class _Replication:
    index: int
    slope_b1: np.ndarray | None = None
    slope_lr: np.ndarray | None = None
    gamma: float = math.nan
    error: str = ""


def _run_replication(rep: int, *, cfg: Ar1StudyConfig, opts: SolverOptions) -> _Replication:
    data = build_lag_matrix(generate_ar1(cfg, rep), [1])
    try:
        b1 = estimate(data, cfg.grid, RegPair(0.0, 0.0), lags=(1,), opts=opts)
        gamma = cv_gamma(data, cfg.grid, cfg.gamma_grid, opts=opts)
        lr = estimate(data, cfg.grid, RegPair(0.0, gamma), lags=(1,), opts=opts)
    except SolverFailure as exc:
        return _Replication(rep, error=str(exc))
    return _Replication(rep, b1.raw_coefs()[1][0], lr.raw_coefs()[1][0], gamma)


@dataclass(frozen=True, eq=False)
class Ar1StudyReport:
    """Raw-scale lag-1 slopes per replication (rows) and level (columns)."""

    grid: QuantileGrid
    replications: np.ndarray
    slopes: dict[str, np.ndarray]
    gammas: np.ndarray
    failed: list[tuple[int, str]]

    def median(self, model: str) -> np.ndarray:
        return np.median(self.slopes[model], axis=0)

    def variance(self, model: str) -> np.ndarray:
        s = self.slopes[model]
        return s.var(axis=0, ddof=1) if s.shape[0] > 1 else np.full(s.shape[1], math.nan)

    def level(self, alpha: float) -> int:
        hits = np.flatnonzero(np.isclose(self.grid.alphas, alpha, atol=1e-12))
        if not hits.size:
            raise KeyError(alpha)
        return int(hits[0])


def run_ar1_study(cfg: Ar1StudyConfig, opts: SolverOptions = SolverOptions(), workers: int = 1) -> Ar1StudyReport:
    """Fit MQR-B1 and MQR-LR (lasso off, curvature weight by CV) on every replication."""
    job = functools.partial(_run_replication, cfg=cfg, opts=opts)
    out = pmap(job, range(cfg.replications), workers)
    ok = [r for r in out if not r.error]
    failed = [(r.index, r.error) for r in out if r.error]
    if failed:
        log.warning("%d of %d replications failed", len(failed), cfg.replications)
        if len(failed) > 0.05 * cfg.replications or not ok:
            raise TooManyFailuresError(len(failed), cfg.replications)
    J = len(cfg.grid)
    slopes = {
        "MQR-B1": np.array([r.slope_b1 for r in ok]).reshape(-1, J),
        "MQR-LR": np.array([r.slope_lr for r in ok]).reshape(-1, J),
    }
    return Ar1StudyReport(cfg.grid, np.array([r.index for r in ok]), slopes,
                          np.array([r.gamma for r in ok]), failed)


def write_slopes_csv(report: Ar1StudyReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "model", "replication", "estimate"])
        for j, a in enumerate(report.grid.alphas):
            for name, s in report.slopes.items():
                for rep, v in zip(report.replications, s[:, j]):
                    w.writerow([repr(float(a)), name, int(rep), repr(float(v))])


def write_ar1_summary_csv(report: Ar1StudyReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "model", "median", "variance"])
        for name in report.slopes:
            med, var = report.median(name), report.variance(name)
            for j, a in enumerate(report.grid.alphas):
                w.writerow([repr(float(a)), name, repr(float(med[j])), repr(float(var[j]))])


# backtest ------------------------------------------------------------------

@dataclass(frozen=True)
class BacktestConfig:
    window: int = 240
    n_windows: int = 100
    horizon: int = 1
    lags: tuple[int, ...] = (1,)
    grid: QuantileGrid = field(default_factory=QuantileGrid.default)
    theta: RegPair = RegPair()
    seed: int = 0
    n_paths: int = 1000
    clamp: tuple[float, float] | None = None
    pooled: bool = False

    def __post_init__(self):
        lags = tuple(int(l) for l in self.lags)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "grid", QuantileGrid.coerce(self.grid))
        if self.window <= max(lags, default=0):
            raise DomainError("the window must exceed the largest lag")
        if self.n_windows < 1 or self.horizon < 1 or self.n_paths < 1:
            raise DomainError("n_windows, horizon and n_paths must be at least 1")

    @property
    def sim(self) -> SimConfig:
        return SimConfig(self.n_paths, self.seed, self.clamp, self.pooled)


@dataclass(frozen=True, eq=False)
class BacktestReport:
    config: BacktestConfig
    result: RollingResult
    sic: float = math.nan

    @property
    def fj(self) -> np.ndarray:
        return self.result.fj

    @property
    def mae(self) -> float:
        return self.result.mae

    @property
    def mae_extreme(self) -> float:
        return self.result.mae_extreme

    def prob_prob(self) -> list[tuple[float, float]]:
        return list(zip(self.config.grid.alphas.tolist(), self.fj.tolist()))

    def table_row(self) -> dict:
        th = self.config.theta
        return {"model": th.label, "horizon": self.config.horizon, "lambda": th.lam, "gamma": th.gamma,
                "sic": self.sic, "mae_percent": 100 * self.mae}


def run_backtest(series: TimeSeries, cfg: BacktestConfig, opts: SolverOptions = SolverOptions(),
                 workers: int = 1) -> BacktestReport:
    """Rolling-origin evaluation of one theta over the last ``n_windows`` origins of ``series``.

    The SIC column is scored on the first window's training rows.
    """
    need = cfg.window + cfg.n_windows + cfg.horizon
    if len(series) < need:
        raise InsufficientDataError(f"backtest needs a series of at least {need} points, got {len(series)}")
    taus = evaluation_indices(len(series), cfg.window, cfg.n_windows, cfg.horizon, max(cfg.lags, default=0))
    result = rolling_forecast(series, cfg.lags, cfg.grid, cfg.theta, cfg.window, taus, cfg.horizon, cfg.sim,
                              opts, workers)
    dm = build_lag_matrix(series, cfg.lags)
    tau = int(taus[0])
    train = dm.subset((dm.index >= tau - (cfg.window - 1)) & (dm.index <= tau - 1))
    try:
        s = sic(estimate(train, cfg.grid, cfg.theta, lags=cfg.lags, opts=opts), train)
    except SolverFailure:
        s = math.nan
    return BacktestReport(cfg, result, s)


def _alpha_tag(a: float) -> str:
    return f"{a:.6g}"


def write_backtest_csv(report: BacktestReport, path) -> None:
    """One row per window: origin, step, outcome, then the fan and the coverage flags."""
    alphas = report.config.grid.alphas
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "step", "y_true"] + [f"q_{_alpha_tag(a)}" for a in alphas]
                   + [f"flag_{_alpha_tag(a)}" for a in alphas])
        for rec in report.result.records:
            w.writerow([rec.tau, report.config.horizon, repr(rec.y_true)]
                       + [repr(float(v)) for v in rec.fan] + [int(f) for f in rec.flags])


def write_probprob_csv(report: BacktestReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "empirical_f"])
        for a, f in report.prob_prob():
            w.writerow([repr(a), repr(f)])


__all__ = [
    "Ar1StudyConfig", "Ar1StudyReport", "BacktestConfig", "BacktestReport", "DEFAULT_GAMMA_GRID",
    "EXTREME_ALPHAS", "cv_gamma", "extreme_mae", "generate_ar1", "probability_mae", "run_ar1_study",
    "run_backtest", "true_ar1_quantile", "write_ar1_summary_csv", "write_backtest_csv", "write_probprob_csv",
    "write_slopes_csv",
]
