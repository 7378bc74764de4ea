"""Continuous quantile functions from fans, and recursive Monte Carlo paths."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import QuantileGrid, TimeSeries
from .errors import DomainError, InsufficientDataError
from .mqr import MqrModel, QuantileFan


@dataclass(frozen=True, eq=False)
class ContinuousQF:
    """Piecewise-linear quantile function on [0, 1].

    ``knots_alpha`` runs from 0 to 1; the end knots come from extending the
    first and last fan segments.
    """

    knots_alpha: np.ndarray
    knots_value: np.ndarray
    rearranged: bool = False

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("probabilities must lie in [0, 1]")
        out = np.interp(u, self.knots_alpha, self.knots_value)
        return float(out) if out.ndim == 0 else out


def build_qf(fan: QuantileFan) -> ContinuousQF:
    a = fan.grid.alphas
    q = np.asarray(fan.values, dtype=float)
    if a.size < 2:
        raise DomainError("a quantile function needs at least two fan levels")
    rearranged = bool(fan.rearranged)
    if np.any(np.diff(q) < 0):
        q = np.sort(q)
        rearranged = True
    left = q[0] - a[0] * (q[1] - q[0]) / (a[1] - a[0])
    right = q[-1] + (1.0 - a[-1]) * (q[-1] - q[-2]) / (a[-1] - a[-2])
    return ContinuousQF(np.concatenate([[0.0], a, [1.0]]), np.concatenate([[left], q, [right]]), rearranged)


def invert_fans(alphas: np.ndarray, Q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Evaluate row ``s`` of the fans ``Q`` (S x J, sorted rows) at ``u[s]``.

    Vectorised twin of ``build_qf(...)(u)``: the outer segments are extended
    linearly, so probabilities below the first level or above the last one use
    the end segments' lines.
    """
    J = alphas.size
    k = np.clip(np.searchsorted(alphas, u, side="right") - 1, 0, J - 2)
    rows = np.arange(Q.shape[0])
    q0, q1 = Q[rows, k], Q[rows, k + 1]
    a0, a1 = alphas[k], alphas[k + 1]
    return q0 + (u - a0) * (q1 - q0) / (a1 - a0)


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    paths: np.ndarray  # (S, K)
    seed: int
    model_id: str = ""
    n_rearranged: int = 0

    def __post_init__(self):
        p = np.array(self.paths, dtype=float)
        if p.ndim != 2 or not np.all(np.isfinite(p)):
            raise DomainError("scenario paths must be a finite S x K matrix")
        p.setflags(write=False)
        object.__setattr__(self, "paths", p)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def n_steps(self) -> int:
        return self.paths.shape[1]


def uniform_draws(seed: int, n_paths: int, n_steps: int) -> np.ndarray:
    """Uniforms from a counter-based Philox stream; entry ``(s, k)`` is draw number ``s*K + k``."""
    return np.random.Generator(np.random.Philox(key=int(seed))).random((n_paths, n_steps))


def model_id(model: MqrModel) -> str:
    return f"{model.label}(lambda={model.theta.lam:g},gamma={model.theta.gamma:g})"


def sample_paths(model: MqrModel, history: TimeSeries | np.ndarray, K: int, S: int, seed: int,
                 clamp: tuple[float, float] | None = None, pooled: bool = False,
                 uniforms: np.ndarray | None = None) -> ScenarioSet:
    """Simulate ``S`` paths of ``K`` steps after the end of ``history``.

    Every path builds its lag vector from the history plus its own simulated
    values and inverts the conditional quantile function at that point. With
    ``pooled=True`` the step-k fans of all paths are averaged level by level
    into one quantile function, which every path then inverts. ``uniforms``
    (S x K) overrides the seeded draws.
    """
    if K < 1 or S < 1:
        raise DomainError("need at least one step and one path")
    if model.lags is None:
        raise DomainError("simulation needs a model fitted on lagged covariates")
    lags = np.array(model.lags, dtype=int)
    hist = history.values if isinstance(history, TimeSeries) else np.asarray(history, dtype=float)
    max_lag = int(lags.max(initial=0))
    if hist.size < max_lag:
        raise InsufficientDataError(f"history of length {hist.size} is shorter than the maximum lag {max_lag}")
    if clamp is not None:
        lo, hi = float(clamp[0]), float(clamp[1])
        if not lo <= hi:
            raise DomainError("clamp bounds must satisfy lo <= hi")
    if uniforms is None:
        u = uniform_draws(seed, S, K)
    else:
        u = np.broadcast_to(np.asarray(uniforms, dtype=float), (S, K))
    alphas = model.grid.alphas
    if alphas.size < 2:
        raise DomainError("a quantile function needs at least two fan levels")

    tail = hist[hist.size - max_lag:] if max_lag else np.empty(0)
    buf = np.empty((S, max_lag + K))
    buf[:, :max_lag] = tail
    n_rearranged = 0
    for k in range(K):
        pos = max_lag + k
        X = buf[:, pos - lags] if lags.size else np.empty((S, 0))
        Q = model.quantiles_raw(X)
        crossed = np.any(np.diff(Q, axis=1) < 0, axis=1)
        n_rearranged += int(crossed.sum())
        if crossed.any():
            Q = np.sort(Q, axis=1)
        if pooled and k > 0:
            Q = np.broadcast_to(Q.mean(axis=0), Q.shape)
        y = invert_fans(alphas, Q, u[:, k])
        if clamp is not None:
            y = np.clip(y, lo, hi)
        buf[:, pos] = y
    return ScenarioSet(buf[:, max_lag:], int(seed), model_id(model), n_rearranged)


def quantiles_from_paths(scen: ScenarioSet, grid: QuantileGrid, step: int) -> QuantileFan:
    """Empirical quantiles of step ``step`` (1-based), linear between order statistics."""
    grid = QuantileGrid.coerce(grid)
    if not 1 <= step <= scen.n_steps:
        raise DomainError(f"step must lie in 1..{scen.n_steps}, got {step}")
    q = np.quantile(scen.paths[:, step - 1], grid.alphas, method="linear")
    # guards against one-ulp dips from interpolation rounding
    return QuantileFan(grid, np.maximum.accumulate(q))


def write_scenarios_csv(scen: ScenarioSet, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario_id", "step", "value"])
        for s in range(scen.n_paths):
            for k in range(scen.n_steps):
                w.writerow([s + 1, k + 1, repr(float(scen.paths[s, k]))])


def write_fans_csv(fans: list[QuantileFan], path) -> None:
    """Rows ``(alpha, value, step)``; ``fans[k]`` is the fan of step ``k+1``."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "value", "step"])
        for k, fan in enumerate(fans, start=1):
            for a, v in zip(fan.grid.alphas, fan.values):
                w.writerow([repr(float(a)), repr(float(v)), k])
