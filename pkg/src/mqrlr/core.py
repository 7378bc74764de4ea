"""Series, quantile grids, design matrices, the check loss and covariate scaling."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateCovariateError, DomainError, InputFormatError, InsufficientDataError


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _parse_timestamp(s: str) -> datetime:
    s = s.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    return datetime.fromisoformat(s)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    values: np.ndarray
    timestamps: tuple[str, ...] | None = None

    def __post_init__(self):
        values = _frozen(self.values).reshape(-1)
        if values.size < 1:
            raise DomainError("a time series needs at least one observation")
        if not np.all(np.isfinite(values)):
            raise DomainError("time series contains non-finite values")
        object.__setattr__(self, "values", values)
        if self.timestamps is not None:
            ts = tuple(str(t) for t in self.timestamps)
            if len(ts) != values.size:
                raise DomainError("timestamps and values differ in length")
            parsed = [_parse_timestamp(t) for t in ts]
            if any(b <= a for a, b in zip(parsed, parsed[1:])):
                raise DomainError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.values.size

    def head(self, n: int) -> "TimeSeries":
        ts = None if self.timestamps is None else self.timestamps[:n]
        return TimeSeries(self.values[:n], ts)


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """Strictly increasing probability levels inside (0, 1).

    Estimation needs at least three levels for the curvature penalty; that is
    checked where it matters, so scoring helpers also accept shorter grids.
    """

    alphas: np.ndarray

    def __post_init__(self):
        a = _frozen(self.alphas).reshape(-1)
        if a.size < 1:
            raise DomainError("quantile grid is empty")
        if not np.all(np.isfinite(a)) or a[0] <= 0.0 or a[-1] >= 1.0:
            raise DomainError("quantile levels must lie in the open interval (0, 1)")
        if np.any(np.diff(a) <= 0):
            raise DomainError("quantile levels must be strictly increasing")
        object.__setattr__(self, "alphas", a)

    @classmethod
    def default(cls) -> "QuantileGrid":
        return cls(np.arange(1, 20) / 20)

    @classmethod
    def coerce(cls, grid) -> "QuantileGrid":
        return grid if isinstance(grid, QuantileGrid) else cls(grid)

    def __len__(self) -> int:
        return self.alphas.size

    def require(self, n: int, what: str) -> None:
        if len(self) < n:
            raise DomainError(f"{what} needs a quantile grid with at least {n} levels, got {len(self)}")

    def same_as(self, other: "QuantileGrid") -> bool:
        return len(self) == len(other) and bool(np.all(self.alphas == other.alphas))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Covariate rows aligned with targets.

    ``index`` holds the series position of each target when the matrix was
    built from lags (``None`` for matrices assembled by hand).
    """

    rows: np.ndarray
    targets: np.ndarray
    covariate_labels: tuple[str, ...] = ()
    index: np.ndarray | None = field(default=None)

    def __post_init__(self):
        targets = _frozen(self.targets).reshape(-1)
        rows = np.array(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows.reshape(targets.size, -1) if targets.size else rows.reshape(0, 0)
        if rows.ndim != 2:
            raise DomainError("covariate rows must form a 2-d array")
        if rows.shape[0] != targets.size:
            raise DomainError(f"{rows.shape[0]} covariate rows but {targets.size} targets")
        if not (np.all(np.isfinite(rows)) and np.all(np.isfinite(targets))):
            raise DomainError("design matrix contains non-finite entries")
        rows.setflags(write=False)
        labels = tuple(self.covariate_labels) or tuple(f"x{p + 1}" for p in range(rows.shape[1]))
        if len(labels) != rows.shape[1]:
            raise DomainError("covariate label count does not match the row dimension")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "covariate_labels", labels)
        if self.index is not None:
            object.__setattr__(self, "index", _frozen(self.index, dtype=np.int64))

    @property
    def n_obs(self) -> int:
        return self.targets.size

    @property
    def n_covariates(self) -> int:
        return self.rows.shape[1]

    def subset(self, which) -> "DesignMatrix":
        idx = None if self.index is None else self.index[which]
        return DesignMatrix(self.rows[which], self.targets[which], self.covariate_labels, idx)


@dataclass(frozen=True, eq=False)
class NormStats:
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        means = _frozen(self.means).reshape(-1)
        sds = _frozen(self.sds).reshape(-1)
        if means.shape != sds.shape:
            raise DomainError("means and sds differ in length")
        if np.any(~np.isfinite(sds)) or np.any(sds <= 0):
            raise DomainError("standard deviations must be strictly positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sds", sds)

    @classmethod
    def identity(cls, p: int) -> "NormStats":
        return cls(np.zeros(p), np.ones(p))


def pinball(alpha, u):
    """Check loss: ``alpha*u`` for ``u >= 0`` and ``(alpha-1)*u`` otherwise.

    Works elementwise on arrays (with broadcasting) as well as on scalars.
    """
    a = np.asarray(alpha, dtype=float)
    if np.any((a <= 0) | (a >= 1)) or np.any(~np.isfinite(a)):
        raise DomainError("alpha must lie in (0, 1)")
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 0, a * u, (a - 1.0) * u)
    return float(out) if out.ndim == 0 else out


def build_lag_matrix(series: TimeSeries, lags: Sequence[int]) -> DesignMatrix:
    lags = [int(l) for l in lags]
    if any(l < 1 for l in lags):
        raise DomainError("lags must be positive integers")
    if len(set(lags)) != len(lags):
        raise DomainError("lags must be distinct")
    y = series.values
    max_lag = max(lags, default=0)
    if y.size < max_lag + 1:
        raise InsufficientDataError(
            f"series of length {y.size} is too short for a maximum lag of {max_lag}"
        )
    t = np.arange(max_lag, y.size)
    rows = np.column_stack([y[t - l] for l in lags]) if lags else np.empty((t.size, 0))
    return DesignMatrix(rows, y[t], tuple(f"lag_{l}" for l in lags), t)


def lag_vector(history: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    """Covariates for the observation that follows ``history``."""
    history = np.asarray(history, dtype=float)
    return np.array([history[history.size - l] for l in lags], dtype=float)


def normalize(m: DesignMatrix) -> tuple[DesignMatrix, NormStats]:
    x = m.rows
    p = x.shape[1]
    if p == 0:
        return m, NormStats.identity(0)
    if x.shape[0] < 2:
        raise InsufficientDataError("normalization needs at least two rows")
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    for k in range(p):
        # exact-constant columns, plus float noise around a constant
        if not sds[k] > 1e-12 * max(1.0, abs(means[k])):
            raise DegenerateCovariateError(m.covariate_labels[k])
    z = (x - means) / sds
    return DesignMatrix(z, m.targets, m.covariate_labels, m.index), NormStats(means, sds)


def apply_norm(x, stats: NormStats) -> np.ndarray:
    """Scale raw covariates with stored statistics; accepts a vector or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != stats.means.size:
        raise DomainError(f"expected {stats.means.size} covariates, got {x.shape[-1]}")
    return (x - stats.means) / stats.sds


def read_series_csv(path) -> TimeSeries:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            fields = [f.strip() for f in (reader.fieldnames or [])]
            if "value" not in fields:
                raise InputFormatError(f"{path}: missing required column 'value'")
            values, stamps = [], []
            for lineno, row in enumerate(reader, start=2):
                row = {k.strip(): v for k, v in row.items() if k is not None}
                try:
                    values.append(float(row["value"]))
                except (TypeError, ValueError):
                    raise InputFormatError(f"{path}:{lineno}: bad value {row['value']!r}") from None
                if "timestamp" in fields:
                    stamps.append(row["timestamp"])
    except OSError as exc:
        raise InputFormatError(f"{path}: {exc.strerror}") from exc
    if not values:
        raise InputFormatError(f"{path}: no observations")
    try:
        return TimeSeries(np.array(values), tuple(stamps) if stamps else None)
    except DomainError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc


def write_series_csv(series: TimeSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if series.timestamps is None:
            w.writerow(["value"])
            w.writerows([repr(float(v))] for v in series.values)
        else:
            w.writerow(["timestamp", "value"])
            w.writerows([t, repr(float(v))] for t, v in zip(series.timestamps, series.values))


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for a named substream of ``seed``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
