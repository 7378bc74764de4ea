"""Dense two-phase primal simplex on a full tableau.

Pricing uses Dantzig's rule until an iteration cap, then switches to Bland's
rule so the method terminates on degenerate problems. Ratio-test ties go to
the basic variable with the lowest index.
"""

from __future__ import annotations

import numpy as np

from ..errors import SolverFailure
from .problem import LpSolution, StandardLP

PIVOT_TOL = 1e-10


class _StandardForm:
    """``min cz s.t. Az = b, z >= 0`` together with the map back to ``x = off + M z``."""

    def __init__(self, lp: StandardLP):
        n = lp.n_vars
        cols = []  # (original index, sign) per structural column
        off = np.zeros(n)
        box_rows = []
        for j in range(n):
            lo, hi = lp.lower[j], lp.upper[j]
            if np.isfinite(lo):
                off[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    box_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                off[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nz = len(cols)
        M = np.zeros((n, nz))
        for k, (j, s) in enumerate(cols):
            M[j, k] = s
        self.M, self.off = M, off

        A_eq = lp.A_eq.toarray() @ M
        b_eq = lp.b_eq - lp.A_eq @ off
        A_le = lp.A_le.toarray() @ M
        b_le = lp.b_le - lp.A_le @ off
        if box_rows:
            extra = np.zeros((len(box_rows), nz))
            for r, (k, width) in enumerate(box_rows):
                extra[r, k] = 1.0
            A_le = np.vstack([A_le, extra])
            b_le = np.concatenate([b_le, [w for _, w in box_rows]])
        m_eq, m_le = A_eq.shape[0], A_le.shape[0]
        self.n_struct = nz
        self.n_slack = m_le
        A = np.zeros((m_eq + m_le, nz + m_le))
        A[:m_eq, :nz] = A_eq
        A[m_eq:, :nz] = A_le
        A[m_eq:, nz:] = np.eye(m_le)
        self.A = A
        self.b = np.concatenate([b_eq, b_le])
        self.c = np.concatenate([lp.c @ M, np.zeros(m_le)])
        self.m_eq = m_eq

    def to_x(self, z: np.ndarray) -> np.ndarray:
        return self.off + self.M @ z[: self.n_struct]


class _Tableau:
    def __init__(self, A, b, basis, max_iter, dantzig_cap):
        self.T = A.copy()
        self.rhs = b.copy()
        self.basis = list(basis)
        self.iterations = 0
        self.max_iter = max_iter
        self.dantzig_cap = dantzig_cap

    def pivot(self, r: int, e: int) -> None:
        T = self.T
        piv = T[r, e]
        T[r] /= piv
        self.rhs[r] /= piv
        col = T[:, e].copy()
        col[r] = 0.0
        nzr = np.flatnonzero(col)
        if nzr.size:
            T[nzr] -= np.outer(col[nzr], T[r])
            self.rhs[nzr] -= col[nzr] * self.rhs[r]
        T[r, e] = 1.0
        T[nzr, e] = 0.0
        self.basis[r] = e
        self.iterations += 1

    def _ratio_row(self, e: int) -> int | None:
        col = self.T[:, e]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return None
        ratios = np.maximum(self.rhs[rows], 0.0) / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        return int(min(tied, key=lambda i: self.basis[i]))

    def run(self, cost: np.ndarray, allowed: np.ndarray, opt_tol: float) -> str:
        """Minimise ``cost . z`` from the current basis; returns ``optimal`` or ``unbounded``."""
        start = self.iterations
        while True:
            cb = cost[self.basis]
            d = cost - cb @ self.T
            d[self.basis] = 0.0
            cand = np.flatnonzero((d < -opt_tol) & allowed)
            if cand.size == 0:
                return "optimal"
            if self.iterations - start < self.dantzig_cap:
                e = int(cand[np.argmin(d[cand])])
            else:
                e = int(cand[0])
            r = self._ratio_row(e)
            if r is None:
                self.unbounded_col = e
                return "unbounded"
            if self.iterations >= self.max_iter:
                raise SolverFailure("simplex iteration cap reached", iterations=self.iterations)
            self.pivot(r, e)


def solve_simplex(lp: StandardLP, feas_tol: float = 1e-7, opt_tol: float = 1e-9,
                  max_iter: int | None = None) -> LpSolution:
    sf = _StandardForm(lp)
    A, b, c = sf.A.copy(), sf.b.copy(), sf.c
    m, n = A.shape
    if m == 0:
        # only sign constraints remain
        if np.any(c < -opt_tol):
            return LpSolution("unbounded", method="simplex")
        x = sf.to_x(np.zeros(n))
        return LpSolution("optimal", x, float(lp.c @ x), 0, "simplex")

    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # slack columns can start in the basis on non-negated inequality rows
    basis = [-1] * m
    for i in range(sf.m_eq, m):
        if not neg[i]:
            basis[i] = sf.n_struct + (i - sf.m_eq)
    art_rows = [i for i in range(m) if basis[i] < 0]
    n_art = len(art_rows)
    if n_art:
        Aa = np.zeros((m, n_art))
        for k, i in enumerate(art_rows):
            Aa[i, k] = 1.0
            basis[i] = n + k
        A = np.hstack([A, Aa])

    size = m + n + n_art
    if max_iter is None:
        max_iter = 50 * size + 1000
    tab = _Tableau(A, b, basis, max_iter=max_iter, dantzig_cap=10 * size)

    scale = 1.0 + float(np.max(np.abs(b), initial=0.0))
    if n_art:
        cost1 = np.concatenate([np.zeros(n), np.ones(n_art)])
        tab.run(cost1, np.ones(n + n_art, dtype=bool), opt_tol)
        infeas = float(np.sum(tab.rhs[[i for i, v in enumerate(tab.basis) if v >= n]]))
        if infeas > feas_tol * scale:
            return LpSolution("infeasible", iterations=tab.iterations, method="simplex")
        # drive remaining (zero-level) artificials out, dropping redundant rows
        keep = []
        for i in range(m):
            if tab.basis[i] < n:
                keep.append(i)
                continue
            row = tab.T[i, :n]
            cand = np.flatnonzero(np.abs(row) > 1e-9)
            if cand.size:
                tab.pivot(i, int(cand[np.argmax(np.abs(row[cand]))]))
                keep.append(i)
        tab.T = tab.T[keep][:, :n]
        tab.rhs = tab.rhs[keep]
        tab.basis = [tab.basis[i] for i in keep]

    status = tab.run(c, np.ones(n, dtype=bool), opt_tol)
    if status == "unbounded":
        return LpSolution("unbounded", iterations=tab.iterations, method="simplex")

    z = np.zeros(n)
    Bcols = np.array(tab.basis)
    # refine the basic solution against the original (un-pivoted) data
    keep_rows = _independent_rows(sf.A, b, neg, Bcols)
    try:
        zb = np.linalg.solve(A[np.ix_(keep_rows, Bcols)], b[keep_rows])
    except np.linalg.LinAlgError:
        zb = tab.rhs
    z[Bcols] = np.maximum(zb, 0.0)
    x = sf.to_x(z)
    viol = lp.residuals(x)
    if viol > feas_tol * scale:
        z[Bcols] = np.maximum(tab.rhs, 0.0)
        x = sf.to_x(z)
        viol = lp.residuals(x)
        if viol > feas_tol * scale:
            raise SolverFailure(f"primal residual {viol:.3g} exceeds tolerance", iterations=tab.iterations)
    return LpSolution("optimal", x, float(lp.c @ x), tab.iterations, "simplex")


def _independent_rows(A_orig, b, neg, Bcols) -> list[int]:
    """Rows of the standard-form system whose basis submatrix is square and nonsingular."""
    m = A_orig.shape[0]
    if len(Bcols) == m:
        return list(range(m))
    # redundant rows were dropped: pick a row subset with full rank greedily
    sub = A_orig[:, Bcols]
    chosen: list[int] = []
    for i in range(m):
        trial = chosen + [i]
        if np.linalg.matrix_rank(sub[trial]) == len(trial):
            chosen = trial
        if len(chosen) == len(Bcols):
            break
    return chosen
