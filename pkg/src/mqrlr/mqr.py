"""Joint non-crossing multi-quantile regression with adaptive-lasso and curvature penalties.

All quantile levels are fitted in one LP. Each level ``alpha_j`` gets an
intercept and a slope vector on normalized covariates. The objective adds up
three terms:

* the check loss over every (row, level) pair,
* ``lam * sum w_pj |beta_pj|`` (adaptive lasso),
* ``gam * sum |D2 beta_pj|``, where ``D2`` is the discrete second derivative
  of each coefficient path across the levels.

Fitted quantiles may not cross at any training row. Intercepts are never
penalised.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import lpsolve
from .core import DesignMatrix, NormStats, QuantileGrid, apply_norm, normalize, pinball
from .errors import DomainError, InputFormatError, InvalidWeightsError, SolverFailure

W_FLOOR = 1e-4
MODEL_FORMAT = "mqrlr-model"


@dataclass(frozen=True)
class RegPair:
    lam: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("lam", "gamma"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and non-negative, got {v}")
            object.__setattr__(self, name, v)

    @property
    def label(self) -> str:
        """Ablation name: no penalty, lasso only, or with the curvature term."""
        if self.gamma > 0:
            return "MQR-LR"
        if self.lam > 0:
            return "MQR-B2"
        return "MQR-B1"


@dataclass(frozen=True, eq=False)
class QuantileFan:
    grid: QuantileGrid
    values: np.ndarray
    rearranged: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != len(self.grid):
            raise DomainError("fan values do not match the grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class MqrModel:
    grid: QuantileGrid
    intercepts: np.ndarray
    coefs: np.ndarray  # (|P|, |J|), on normalized covariates
    norm_stats: NormStats
    theta: RegPair
    covariate_labels: tuple[str, ...]
    weights_used: np.ndarray
    lags: tuple[int, ...] | None = None
    objective_value: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        J = len(self.grid)
        b0 = np.array(self.intercepts, dtype=float).reshape(J)
        B = np.array(self.coefs, dtype=float).reshape(-1, J)
        W = np.array(self.weights_used, dtype=float).reshape(B.shape)
        if B.shape[0] != len(self.covariate_labels) or B.shape[0] != self.norm_stats.means.size:
            raise DomainError("coefficient rows, labels and normalization stats disagree")
        for a in (b0, B, W):
            a.setflags(write=False)
        object.__setattr__(self, "intercepts", b0)
        object.__setattr__(self, "coefs", B)
        object.__setattr__(self, "weights_used", W)
        if self.lags is not None:
            object.__setattr__(self, "lags", tuple(int(l) for l in self.lags))

    @property
    def label(self) -> str:
        return self.theta.label

    @property
    def n_covariates(self) -> int:
        return self.coefs.shape[0]

    def quantiles(self, z) -> np.ndarray:
        """Fitted quantiles for already-normalized rows, shape ``(rows, |J|)``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.n_covariates:
            raise DomainError(f"expected {self.n_covariates} covariates, got {z.shape[1]}")
        return self.intercepts + z @ self.coefs

    def quantiles_raw(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_covariates:
            raise DomainError(f"expected {self.n_covariates} covariates, got {x.shape[1]}")
        return self.quantiles(apply_norm(x, self.norm_stats))

    def raw_coefs(self) -> tuple[np.ndarray, np.ndarray]:
        """Intercepts and slopes expressed on the original covariate scale."""
        sds = self.norm_stats.sds[:, None]
        slopes = self.coefs / sds
        b0 = self.intercepts - (self.norm_stats.means[:, None] * slopes).sum(axis=0)
        return b0, slopes

    def curvature(self) -> np.ndarray:
        """Discrete second derivative of every coefficient path, shape ``(|P|, |J|-2)``."""
        return self.coefs @ second_derivative_matrix(self.grid).T


def second_derivative(beta_prev, beta_cur, beta_next, a_prev, a_cur, a_next) -> float:
    if not (a_prev < a_cur < a_next):
        raise DomainError("second derivative needs strictly increasing probability levels")
    right = (beta_next - beta_cur) / (a_next - a_cur)
    left = (beta_cur - beta_prev) / (a_cur - a_prev)
    return (right - left) / (a_next - a_prev)


def second_derivative_matrix(grid: QuantileGrid) -> np.ndarray:
    """Row ``k`` maps a coefficient path to its second derivative at interior level ``k+1``."""
    a = grid.alphas
    J = a.size
    D = np.zeros((max(J - 2, 0), J))
    for k in range(1, J - 1):
        hl, hr, span = a[k] - a[k - 1], a[k + 1] - a[k], a[k + 1] - a[k - 1]
        D[k - 1, k - 1] = 1.0 / (hl * span)
        D[k - 1, k] = -(1.0 / hr + 1.0 / hl) / span
        D[k - 1, k + 1] = 1.0 / (hr * span)
    return D


class LpLayout:
    """Column offsets of the estimation LP.

    Blocks, in order: intercepts ``b0[j]``, slopes ``beta[p,j]``, residual
    parts ``eps+[t,j]`` and ``eps-[t,j]``, lasso parts ``xi+[p,j]`` and
    ``xi-[p,j]``, curvature parts ``d2+[p,j]`` and ``d2-[p,j]`` for interior
    ``j``. Inside each block the level index varies slowest.
    """

    def __init__(self, T: int, P: int, J: int):
        self.T, self.P, self.J = T, P, J
        Ji = max(J - 2, 0)
        sizes = [J, P * J, T * J, T * J, P * J, P * J, P * Ji, P * Ji]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        (self.b0, self.beta, self.eps_pos, self.eps_neg, self.xi_pos, self.xi_neg,
         self.d2_pos, self.d2_neg, self.n_vars) = (int(o) for o in self.offsets)

    def labels(self) -> tuple[str, ...]:
        T, P, J = self.T, self.P, self.J
        out = [f"b0[{j}]" for j in range(J)]
        out += [f"beta[{p},{j}]" for j in range(J) for p in range(P)]
        for tag in ("eps+", "eps-"):
            out += [f"{tag}[{t},{j}]" for j in range(J) for t in range(T)]
        for tag in ("xi+", "xi-"):
            out += [f"{tag}[{p},{j}]" for j in range(J) for p in range(P)]
        for tag in ("d2+", "d2-"):
            out += [f"{tag}[{p},{j}]" for j in range(1, J - 1) for p in range(P)]
        return tuple(out)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        b0 = x[self.b0:self.beta]
        B = x[self.beta:self.eps_pos].reshape(self.J, self.P).T
        return b0, B


def build_lp(data: DesignMatrix, grid: QuantileGrid, theta: RegPair, weights=None,
             crossing_rows: Sequence[int] | None = None, labels: bool = True) -> lpsolve.StandardLP:
    """Assemble the estimation LP for normalized ``data``.

    ``crossing_rows`` limits the non-crossing constraints to a subset of the
    training rows (all rows when ``None``); the estimator uses this to add
    them lazily.
    """
    grid = QuantileGrid.coerce(grid)
    grid.require(3, "the curvature penalty")
    X, y = data.rows, data.targets
    T, P = X.shape
    J = len(grid)
    alphas = grid.alphas
    W = np.ones((P, J)) if weights is None else np.asarray(weights, dtype=float)
    if W.shape != (P, J):
        raise InvalidWeightsError(f"weights must have shape {(P, J)}, got {W.shape}")
    if np.any(~np.isfinite(W)) or np.any(W <= 0):
        raise InvalidWeightsError("adaptive-lasso weights must be strictly positive and finite")

    L = LpLayout(T, P, J)
    Ji = J - 2
    c = np.zeros(L.n_vars)
    c[L.eps_pos:L.eps_neg] = np.repeat(alphas, T)
    c[L.eps_neg:L.xi_pos] = np.repeat(1.0 - alphas, T)
    wflat = W.T.reshape(-1)  # index j*P + p
    c[L.xi_pos:L.xi_neg] = theta.lam * wflat
    c[L.xi_neg:L.d2_pos] = theta.lam * wflat
    c[L.d2_pos:L.n_vars] = theta.gamma

    I_J = sp.identity(J, format="csr")
    eye = lambda n: sp.identity(n, format="csr")
    zeros = lambda r, k: sp.csr_matrix((r, k))
    TJ, PJ, PJi = T * J, P * J, P * Ji

    # residual rows: b0_j + beta_j.x_t + eps+ - eps- = y_t
    fit = sp.hstack([sp.kron(I_J, np.ones((T, 1))), sp.kron(I_J, sp.csr_matrix(X)),
                     eye(TJ), -eye(TJ), zeros(TJ, 2 * PJ + 2 * PJi)])
    # lasso rows: xi+ - xi- - beta = 0
    lasso = sp.hstack([zeros(PJ, J), -eye(PJ), zeros(PJ, 2 * TJ), eye(PJ), -eye(PJ), zeros(PJ, 2 * PJi)])
    # curvature rows: d2+ - d2- - D2(beta) = 0
    Dk = sp.kron(sp.csr_matrix(second_derivative_matrix(grid)), eye(P))
    curv = sp.hstack([zeros(PJi, J), -Dk, zeros(PJi, 2 * TJ + 2 * PJ), eye(PJi), -eye(PJi)])
    A_eq = sp.vstack([fit, lasso, curv]).tocsr()
    b_eq = np.concatenate([np.tile(y, J), np.zeros(PJ + PJi)])

    rows = np.arange(T) if crossing_rows is None else np.asarray(sorted(set(int(r) for r in crossing_rows)), dtype=int)
    R = rows.size
    # q_j(x_t) - q_{j+1}(x_t) <= 0
    step = sp.csr_matrix(np.eye(J - 1, J) - np.eye(J - 1, J, k=1))
    Xr = sp.csr_matrix(X[rows]) if P else sp.csr_matrix((R, 0))
    A_le = sp.hstack([sp.kron(step, np.ones((R, 1))), sp.kron(step, Xr),
                      zeros(R * (J - 1), L.n_vars - L.eps_pos)]).tocsr()
    b_le = np.zeros(R * (J - 1))

    lower = np.zeros(L.n_vars)
    lower[:L.eps_pos] = -np.inf
    kw = {}
    if labels:
        kw = dict(
            var_labels=L.labels(),
            eq_labels=tuple(f"fit[{t},{j}]" for j in range(J) for t in range(T))
            + tuple(f"lasso[{p},{j}]" for j in range(J) for p in range(P))
            + tuple(f"curv[{p},{j}]" for j in range(1, J - 1) for p in range(P)),
            le_labels=tuple(f"order[{t},{j}]" for j in range(J - 1) for t in rows),
        )
    return lpsolve.StandardLP(c, A_eq, b_eq, A_le, b_le, lower, np.full(L.n_vars, np.inf), **kw)


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = lpsolve.DEFAULT_FEAS_TOL
    opt_tol: float = lpsolve.DEFAULT_OPT_TOL
    method: str = "auto"
    lazy_crossing: bool = True


def _initial_crossing_rows(X: np.ndarray) -> list[int]:
    if X.shape[1] == 0:
        return [0]
    rows = {0}
    rows.update(int(i) for i in np.argmin(X, axis=0))
    rows.update(int(i) for i in np.argmax(X, axis=0))
    return sorted(rows)


def fit_normalized(z: DesignMatrix, grid: QuantileGrid, theta: RegPair, weights=None,
                   opts: SolverOptions = SolverOptions()):
    """One LP fit on normalized data; returns ``(intercepts, coefs, objective)``.

    With lazy crossing the LP starts from the rows at each covariate's
    extremes and grows by every training row whose fitted quantiles cross,
    until none do. The last LP's optimum is then optimal for the full one.
    """
    X = z.rows
    T, P = X.shape
    J = len(grid)
    rows = None if not opts.lazy_crossing else _initial_crossing_rows(X)
    L = LpLayout(T, P, J)
    while True:
        lp = build_lp(z, grid, theta, weights, crossing_rows=rows, labels=False)
        sol = lpsolve.solve(lp, opts.feas_tol, opts.opt_tol, opts.method)
        if not sol.optimal:
            raise SolverFailure(f"estimation LP reported {sol.status}", iterations=sol.iterations)
        b0, B = L.split(sol.x)
        if rows is None:
            return b0.copy(), B.copy(), sol.objective_value
        Q = b0 + X @ B
        bad = np.flatnonzero(np.any(np.diff(Q, axis=1) < -opts.feas_tol, axis=1))
        new = sorted(set(bad.tolist()) - set(rows))
        if not new:
            return b0.copy(), B.copy(), sol.objective_value
        rows = sorted(set(rows) | set(new))


def adaptive_weights(pilot_coefs: np.ndarray, floor: float = W_FLOOR) -> np.ndarray:
    return 1.0 / np.maximum(np.abs(pilot_coefs), floor)


def estimate(data: DesignMatrix, grid: QuantileGrid, theta: RegPair, *, lags: Sequence[int] | None = None,
             w_floor: float = W_FLOOR, opts: SolverOptions = SolverOptions()) -> MqrModel:
    """Two-stage fit: a pilot without the lasso term sets the adaptive weights for the final LP.

    ``data`` is on the raw scale; covariates are normalized here and the
    statistics are kept in the model. ``lags`` records which lags produced the
    covariates so the model can drive recursive simulation.
    """
    grid = QuantileGrid.coerce(grid)
    grid.require(3, "estimation")
    z, stats = normalize(data)
    P, J = z.n_covariates, len(grid)
    pilot_theta = RegPair(0.0, theta.gamma)
    try:
        b0, B, obj = fit_normalized(z, grid, pilot_theta, None, opts)
    except SolverFailure as exc:
        raise exc.with_stage("pilot") from exc
    weights = np.ones((P, J))
    if theta.lam > 0 and P:
        weights = adaptive_weights(B, w_floor)
        try:
            b0, B, obj = fit_normalized(z, grid, theta, weights, opts)
        except SolverFailure as exc:
            raise exc.with_stage("final") from exc
    return MqrModel(grid, b0, B, stats, theta, tuple(data.covariate_labels), weights,
                    None if lags is None else tuple(lags), float(obj))


def penalized_objective(model: MqrModel, data: DesignMatrix) -> float:
    """Objective value of ``model`` on raw ``data``, evaluated from its coefficients alone."""
    Q = model.quantiles_raw(data.rows)
    loss = pinball(model.grid.alphas, data.targets[:, None] - Q).sum()
    lasso = model.theta.lam * np.sum(model.weights_used * np.abs(model.coefs))
    curv = model.theta.gamma * np.sum(np.abs(model.curvature()))
    return float(loss + lasso + curv)


def predict_fan(model: MqrModel, x_raw) -> QuantileFan:
    """Quantile fan for one raw covariate vector; crossed fans are sorted and flagged."""
    x = np.asarray(x_raw, dtype=float).reshape(-1)
    if x.size != model.n_covariates:
        raise DomainError(f"expected {model.n_covariates} covariates, got {x.size}")
    q = model.quantiles_raw(x)[0]
    crossed = bool(np.any(np.diff(q) < 0))
    if crossed:
        q = np.sort(q)
    return QuantileFan(model.grid, q, crossed)


def save_model(model: MqrModel, path) -> None:
    """Write the model as JSON text; floats use shortest round-trip repr, so reloads are bit-exact."""
    doc = {
        "format": MODEL_FORMAT,
        "version": 1,
        "label": model.label,
        "grid": model.grid.alphas.tolist(),
        "theta": {"lambda": model.theta.lam, "gamma": model.theta.gamma},
        "lags": None if model.lags is None else list(model.lags),
        "covariate_labels": list(model.covariate_labels),
        "norm_means": model.norm_stats.means.tolist(),
        "norm_sds": model.norm_stats.sds.tolist(),
        "intercepts": model.intercepts.tolist(),
        "coefs": model.coefs.tolist(),
        "weights": model.weights_used.tolist(),
        "objective_value": model.objective_value,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path) -> MqrModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFormatError(f"{path}: cannot read model ({exc})") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise InputFormatError(f"{path}: not an {MODEL_FORMAT} file")
    grid = QuantileGrid(doc["grid"])
    P = len(doc["covariate_labels"])
    return MqrModel(
        grid=grid,
        intercepts=np.array(doc["intercepts"], dtype=float),
        coefs=np.array(doc["coefs"], dtype=float).reshape(P, len(grid)),
        norm_stats=NormStats(doc["norm_means"], doc["norm_sds"]),
        theta=RegPair(doc["theta"]["lambda"], doc["theta"]["gamma"]),
        covariate_labels=tuple(doc["covariate_labels"]),
        weights_used=np.array(doc["weights"], dtype=float).reshape(P, len(grid)),
        lags=None if doc["lags"] is None else tuple(doc["lags"]),
        objective_value=float(doc["objective_value"]),
    )


def coefficient_rows(model: MqrModel):
    """``(alpha, covariate, value)`` triples on the raw scale, intercept first."""
    b0, B = model.raw_coefs()
    for j, a in enumerate(model.grid.alphas):
        yield float(a), "intercept", float(b0[j])
        for p, name in enumerate(model.covariate_labels):
            yield float(a), name, float(B[p, j])
