from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import DomainError

Status = Literal["optimal", "infeasible", "unbounded"]


def _as_csr(a, ncols: int) -> sp.csr_matrix:
    if a is None:
        return sp.csr_matrix((0, ncols))
    if sp.issparse(a):
        m = sp.csr_matrix(a, dtype=float)
    else:
        arr = np.asarray(a, dtype=float)
        if arr.size == 0:
            arr = arr.reshape(0, ncols)
        m = sp.csr_matrix(np.atleast_2d(arr))
    m.sum_duplicates()
    m.eliminate_zeros()
    return m


@dataclass(frozen=True, eq=False)
class StandardLP:
    """``min c.x`` subject to ``A_eq x = b_eq``, ``A_le x <= b_le`` and per-variable bounds.

    Matrices are kept in CSR form; dense inputs are converted on construction.
    """

    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_le: sp.csr_matrix
    b_le: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    var_labels: tuple[str, ...] = ()
    eq_labels: tuple[str, ...] = ()
    le_labels: tuple[str, ...] = ()

    @classmethod
    def build(
        cls,
        c,
        A_eq=None,
        b_eq=None,
        A_le=None,
        b_le=None,
        lower=None,
        upper=None,
        var_labels: Sequence[str] = (),
        eq_labels: Sequence[str] = (),
        le_labels: Sequence[str] = (),
    ) -> "StandardLP":
        c = np.asarray(c, dtype=float).reshape(-1)
        n = c.size
        A_eq = _as_csr(A_eq, n)
        A_le = _as_csr(A_le, n)
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
        b_le = np.zeros(0) if b_le is None else np.asarray(b_le, dtype=float).reshape(-1)
        lower = np.zeros(n) if lower is None else np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
        upper = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
        lp = cls(c, A_eq, b_eq, A_le, b_le, lower, upper, tuple(var_labels), tuple(eq_labels), tuple(le_labels))
        lp.validate()
        return lp

    def validate(self) -> None:
        n = self.c.size
        if self.A_eq.shape[1] != n or self.A_le.shape[1] != n:
            raise DomainError("constraint matrices must have one column per variable")
        if self.A_eq.shape[0] != self.b_eq.size or self.A_le.shape[0] != self.b_le.size:
            raise DomainError("right-hand sides must match constraint row counts")
        if self.lower.size != n or self.upper.size != n:
            raise DomainError("bounds must have one entry per variable")
        if np.any(self.lower > self.upper) or np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise DomainError("inconsistent variable bounds")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b_eq)) and np.all(np.isfinite(self.b_le))):
            raise DomainError("objective and right-hand sides must be finite")
        if self.var_labels and len(self.var_labels) != n:
            raise DomainError("one label per variable expected")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_eq(self) -> int:
        return self.b_eq.size

    @property
    def n_le(self) -> int:
        return self.b_le.size

    def label(self, i: int) -> str:
        return self.var_labels[i] if self.var_labels else f"x{i}"

    def index_of(self, label: str) -> int:
        return self.var_labels.index(label)

    def residuals(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation at ``x``."""
        viol = [0.0]
        if self.n_eq:
            viol.append(np.max(np.abs(self.A_eq @ x - self.b_eq)))
        if self.n_le:
            viol.append(np.max(self.A_le @ x - self.b_le))
        viol.append(np.max(self.lower - x, initial=0.0))
        viol.append(np.max(x - self.upper, initial=0.0))
        return float(max(viol))

    def scaled(self, k: float) -> "StandardLP":
        return StandardLP(self.c * k, self.A_eq, self.b_eq, self.A_le, self.b_le, self.lower,
                          self.upper, self.var_labels, self.eq_labels, self.le_labels)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective_value: float | None = None
    iterations: int = 0
    method: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _fmt(v: float) -> str:
    return repr(float(v))


def _row_text(row: sp.csr_matrix, lp: StandardLP) -> str:
    terms = [f"{_fmt(v)} {lp.label(j)}" for j, v in zip(row.indices, row.data)]
    return " + ".join(terms) if terms else "0"


def dump_lp(lp: StandardLP, path) -> None:
    """Write ``lp`` as plain text, one item per line.

    Layout::

        # mqrlr-lp 1
        vars <n> eq <m_eq> le <m_le>
        min: <coef> <label> + ...
        eq <name>: <coef> <label> + ... = <rhs>
        le <name>: <coef> <label> + ... <= <rhs>
        bound <label> <lower> <upper>

    Zero objective terms are omitted; bounds use ``-inf``/``inf``.
    """
    with open(path, "w") as fh:
        fh.write("# mqrlr-lp 1\n")
        fh.write(f"vars {lp.n_vars} eq {lp.n_eq} le {lp.n_le}\n")
        nz = np.flatnonzero(lp.c)
        fh.write("min: " + (" + ".join(f"{_fmt(lp.c[j])} {lp.label(j)}" for j in nz) or "0") + "\n")
        for i in range(lp.n_eq):
            name = lp.eq_labels[i] if lp.eq_labels else f"e{i}"
            fh.write(f"eq {name}: {_row_text(lp.A_eq[i], lp)} = {_fmt(lp.b_eq[i])}\n")
        for i in range(lp.n_le):
            name = lp.le_labels[i] if lp.le_labels else f"l{i}"
            fh.write(f"le {name}: {_row_text(lp.A_le[i], lp)} <= {_fmt(lp.b_le[i])}\n")
        for j in range(lp.n_vars):
            fh.write(f"bound {lp.label(j)} {_fmt(lp.lower[j])} {_fmt(lp.upper[j])}\n")
