"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from _lpgen import random_lp
from conftest import ar1_values
from mqrlr.calibrate import CalibrationContext, ThetaGrid, grid_search, sic_from_residuals
from mqrlr.core import DesignMatrix, QuantileGrid, TimeSeries, build_lag_matrix, pinball
from mqrlr.evalharness import Ar1StudyConfig, BacktestConfig, generate_ar1, run_ar1_study, run_backtest
from mqrlr.lpsolve import brute_force_oracle, solve
from mqrlr.mqr import RegPair, estimate, predict_fan
from mqrlr.scenario import sample_paths, write_scenarios_csv

G19 = QuantileGrid.default()

# every model fitted here is re-checked for in-sample crossing by criterion 3
FITTED = []


def fit(data, theta, grid=G19, **kw):
    m = estimate(data, grid, theta, **kw)
    FITTED.append((m, data))
    return m


@pytest.fixture(scope="module")
def ar1_400():
    # n = 400 gives 399 lag rows; alpha*T is then never an integer on the 19-point
    # grid, so every sample quantile (and the lambda-limit fit) is unique
    return build_lag_matrix(TimeSeries(ar1_values(400, beta1=0.3, seed=2024)), [1])


def test_ac01_lp_oracle_equivalence(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    mismatches, worst, counts = 0, 0.0, {}
    for _ in range(200):
        lp = random_lp(rng, max_vars=5, max_rows=5)
        sol, ref = solve(lp), brute_force_oracle(lp)
        counts[ref.status] = counts.get(ref.status, 0) + 1
        if sol.status != ref.status:
            mismatches += 1
        elif sol.optimal:
            worst = max(worst, abs(sol.objective_value - ref.objective_value))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and worst <= 1e-8 and elapsed < 10
    acceptance.check(1, "LP solver agrees with vertex enumeration", ok,
                     f"mismatches={mismatches} max|dobj|={worst:.1e} {counts} {elapsed:.2f}s")


def test_ac02_quantile_recovery(acceptance):
    t0 = time.perf_counter()
    y = np.random.default_rng(2).standard_normal(500)
    data = DesignMatrix(np.empty((500, 0)), y)
    m = fit(data, RegPair())
    worst = 0.0
    for j, a in enumerate(G19.alphas):
        fitted = pinball(a, y - m.intercepts[j]).sum()
        best = min(pinball(a, y - c).sum() for c in y)
        worst = max(worst, (fitted - best) / best)
    elapsed = time.perf_counter() - t0
    acceptance.check(2, "intercept-only fit attains the minimum pinball loss", worst <= 1e-6 and elapsed < 30,
                     f"max relative excess={worst:.1e} {elapsed:.1f}s")


def test_ac04_gamma_limit(acceptance, ar1_400):
    m = fit(ar1_400, RegPair(0, 1e6))
    worst = float(np.abs(m.curvature()).max())
    acceptance.check(4, "gamma limit gives affine coefficient paths", worst <= 1e-5, f"max|D2|={worst:.1e}")


def test_ac05_lambda_limit(acceptance, ar1_400):
    m = fit(ar1_400, RegPair(1e6, 0))
    slope = float(np.abs(m.coefs).max())
    icpt = fit(DesignMatrix(np.empty((ar1_400.n_obs, 0)), ar1_400.targets), RegPair())
    gap = float(np.abs(m.quantiles_raw(ar1_400.rows) - icpt.intercepts).max())
    acceptance.check(5, "lambda limit zeroes slopes and matches the intercept-only fit",
                     slope <= 1e-6 and gap <= 1e-5, f"max|slope|={slope:.1e} max|dq|={gap:.1e}")


@pytest.mark.slow
def test_ac06_ar1_study(acceptance):
    t0 = time.perf_counter()
    cfg = Ar1StudyConfig(beta1=0.3, n=400, replications=200, seed=0)
    rep = run_ar1_study(cfg)
    elapsed = time.perf_counter() - t0
    med = float(rep.median("MQR-B1")[rep.level(0.5)])
    med_lr = float(rep.median("MQR-LR")[rep.level(0.5)])
    lo, hi = rep.level(0.05), rep.level(0.95)
    v_b1, v_lr = rep.variance("MQR-B1"), rep.variance("MQR-LR")
    ok = (abs(med - 0.3) <= 0.05 and abs(med_lr - 0.3) <= 0.05 and v_lr[lo] < v_b1[lo] and v_lr[hi] < v_b1[hi]
          and elapsed < 20 * 60 and not rep.failed)
    acceptance.check(6, "AR(1) study: central slope recovered, extreme-slope variance reduced", ok,
                     f"median@0.5 B1={med:.3f} LR={med_lr:.3f}; var@0.05 LR={v_lr[lo]:.4f}<B1={v_b1[lo]:.4f}; "
                     f"var@0.95 LR={v_lr[hi]:.4f}<B1={v_b1[hi]:.4f}; {elapsed:.0f}s")
    # a few replications feed the crossing check of criterion 3
    for r in range(3):
        data = build_lag_matrix(generate_ar1(cfg, r), [1])
        fit(data, RegPair())
        fit(data, RegPair(0, float(rep.gammas[r])))


def test_ac07_calibration_coherence(acceptance):
    series = TimeSeries(ar1_values(400, beta1=0.3, seed=77))
    ctx = CalibrationContext(series, (1,), G19, window=240, n_windows=100)
    rep = grid_search(ThetaGrid((0.0, 1.0, 20.0), (0.0, 1.0)), "mae", ctx)
    best = rep.best_by_mae

    def backtest_mae(theta):
        return run_backtest(series, BacktestConfig(window=240, n_windows=100, lags=(1,), theta=theta)).mae

    mae_best, mae_b1 = backtest_mae(best), backtest_mae(RegPair(0, 0))
    ok = mae_best <= mae_b1 and mae_best == rep.row(best).mae
    acceptance.check(7, "MAE-selected theta does not lose to (0,0) on the same windows", ok,
                     f"best={best} MAE={100 * mae_best:.2f}% vs B1 {100 * mae_b1:.2f}%")


def test_ac08_simulation(acceptance, ar1_400, tmp_path):
    m = fit(ar1_400, RegPair(0, 0.1), lags=[1])
    history = ar1_400.targets
    scen = sample_paths(m, history, 1, 100_000, seed=8)
    fan = predict_fan(m, [history[-1]]).values
    ecdf = (scen.paths[:, :1] <= fan[None, :]).mean(axis=0)
    worst = float(np.abs(ecdf - G19.alphas).max())
    files = []
    for name in ("a.csv", "b.csv"):
        write_scenarios_csv(sample_paths(m, history, 6, 500, seed=123), tmp_path / name)
        files.append((tmp_path / name).read_bytes())
    same = files[0] == files[1]
    acceptance.check(8, "inverse-transform draws hit the fan levels; seeds reproduce files", worst <= 0.01 and same,
                     f"max|ecdf-alpha|={worst:.4f} identical={same}")


def test_ac09_backtest_sanity(acceptance):
    cfg = Ar1StudyConfig(beta1=0.3, n=241 + 200, seed=9)
    series = generate_ar1(cfg, 0)
    b1 = run_backtest(series, BacktestConfig(window=240, n_windows=200, lags=(1,), theta=RegPair()))
    lr = run_backtest(series, BacktestConfig(window=240, n_windows=200, lags=(1,), theta=RegPair(1.0, 1.0)))
    acceptance.check(9, "true-model backtest MAE within the binomial-noise bound", b1.mae <= 0.05,
                     f"MQR-B1 MAE={100 * b1.mae:.2f}% (MQR-LR(1,1) {100 * lr.mae:.2f}%, reported only)")


def test_ac10_sic_fixtures(acceptance):
    a = sic_from_residuals([[1.0], [-1.0], [2.0]], [0.5])
    b = sic_from_residuals([[1.0], [-1.0], [0.0]], [0.5])
    base = np.array([[1.0], [-1.0], [2.0], [-2.0]])
    c = sic_from_residuals(np.vstack([base, [[0.0]]]), [0.5]) - sic_from_residuals(
        np.vstack([base, [[1e-5]]]), [0.5])
    errs = [abs(a - math.log(2)), abs(b - math.log(3) / 6),
            abs(c - (math.log(5) / 10 + math.log(3.0) - math.log(3.0 + 5e-6)))]
    acceptance.check(10, "SIC matches hand-computed fixtures", max(errs) <= 1e-10, f"max error={max(errs):.1e}")


def test_ac03_non_crossing(acceptance):
    # runs last so it sees the models fitted by the other criteria
    extra = build_lag_matrix(TimeSeries(ar1_values(300, seed=31)), [1, 2, 3])
    for theta in (RegPair(), RegPair(1, 0), RegPair(0, 1), RegPair(2, 7)):
        fit(extra, theta)
    worst = min(float(np.diff(m.quantiles_raw(d.rows), axis=1).min()) for m, d in FITTED)
    acceptance.check(3, "fitted quantiles never cross at training rows", worst >= -1e-6,
                     f"{len(FITTED)} models, min adjacent gap={worst:.2e}")
