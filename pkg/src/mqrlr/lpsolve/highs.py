"""HiGHS-backed solves, on the LP itself or on its explicit dual.

The dual route pays off for the estimator's LPs: they have thousands of rows
but only ``|J|(|P|+1)`` free variables, so the dual has that many rows and is
solved in a few hundred simplex iterations. The primal point is read back
from the dual's row multipliers and re-checked against the original LP.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import SolverFailure
from .problem import LpSolution, StandardLP

try:
    import highspy
except ImportError:  # pragma: no cover - exercised only without the optional backend
    highspy = None

INF = float("inf")


def _require():
    if highspy is None:
        raise SolverFailure("the highspy package is not installed")


def _new_solver(feas_tol: float, opt_tol: float):
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("primal_feasibility_tolerance", max(min(feas_tol, 1e-7), 1e-10))
    h.setOptionValue("dual_feasibility_tolerance", max(min(opt_tol, 1e-7), 1e-10))
    return h


def _pass(h, cost, col_lo, col_hi, row_lo, row_hi, A: sp.csc_matrix) -> None:
    lp = highspy.HighsLp()
    lp.num_col_ = int(cost.size)
    lp.num_row_ = int(row_lo.size)
    lp.col_cost_ = np.asarray(cost, dtype=float)
    lp.col_lower_ = np.asarray(col_lo, dtype=float)
    lp.col_upper_ = np.asarray(col_hi, dtype=float)
    lp.row_lower_ = np.asarray(row_lo, dtype=float)
    lp.row_upper_ = np.asarray(row_hi, dtype=float)
    A = sp.csc_matrix(A)
    A.sort_indices()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    h.passModel(lp)


def _status(h) -> str:
    ms = h.getModelStatus()
    S = highspy.HighsModelStatus
    if ms == S.kOptimal:
        return "optimal"
    if ms == S.kInfeasible:
        return "infeasible"
    if ms == S.kUnbounded:
        return "unbounded"
    if ms == S.kUnboundedOrInfeasible:
        return "unbounded_or_infeasible"
    return h.modelStatusToString(ms)


def solve_highs(lp: StandardLP, feas_tol: float = 1e-7, opt_tol: float = 1e-9) -> LpSolution:
    _require()
    h = _new_solver(feas_tol, opt_tol)
    A = sp.vstack([lp.A_eq, lp.A_le]).tocsc()
    row_lo = np.concatenate([lp.b_eq, np.full(lp.n_le, -INF)])
    row_hi = np.concatenate([lp.b_eq, lp.b_le])
    _pass(h, lp.c, lp.lower, lp.upper, row_lo, row_hi, A)
    h.run()
    status = _status(h)
    if status != "optimal":
        # presolve has been seen to report unbounded problems as infeasible
        h.setOptionValue("presolve", "off")
        h.clearSolver()
        h.run()
        status = _status(h)
    if status == "unbounded_or_infeasible":
        zero = lp.scaled(0.0)
        status = "unbounded" if solve_highs(zero, feas_tol, opt_tol).optimal else "infeasible"
    iters = int(h.getInfo().simplex_iteration_count)
    if status in ("infeasible", "unbounded"):
        return LpSolution(status, iterations=iters, method="highs")
    if status != "optimal":
        raise SolverFailure(f"HiGHS stopped with status {status!r}", iterations=iters)
    x = np.clip(np.array(h.getSolution().col_value), lp.lower, lp.upper)
    _check_primal(lp, x, feas_tol, iters)
    return LpSolution("optimal", x, float(lp.c @ x), iters, "highs")


def _check_primal(lp: StandardLP, x, feas_tol: float, iters: int) -> None:
    scale = 1.0 + float(np.max(np.abs(np.concatenate([lp.b_eq, lp.b_le])), initial=0.0))
    viol = lp.residuals(x)
    if viol > feas_tol * scale:
        raise SolverFailure(f"primal residual {viol:.3g} exceeds tolerance", iterations=iters)


def solve_highs_dual(lp: StandardLP, feas_tol: float = 1e-7, opt_tol: float = 1e-9) -> LpSolution:
    """Solve the LP dual with HiGHS and recover the primal optimum from its multipliers.

    Any outcome other than a certified optimum is handed to the primal route,
    which also resolves infeasible versus unbounded.
    """
    _require()
    lo, hi = lp.lower, lp.upper
    both = np.flatnonzero(np.isfinite(lo) & np.isfinite(hi))
    A_le, b_le = lp.A_le, lp.b_le
    if both.size:
        box = sp.csr_matrix((np.ones(both.size), (np.arange(both.size), both)), shape=(both.size, lp.n_vars))
        A_le = sp.vstack([A_le, box]).tocsr()
        b_le = np.concatenate([b_le, hi[both]])
    off = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    A = sp.vstack([lp.A_eq, A_le]).tocsr()
    b = np.concatenate([lp.b_eq, b_le]) - A @ off
    m_eq = lp.n_eq
    m = A.shape[0]
    if m == 0:
        return solve_highs(lp, feas_tol, opt_tol)

    # rows of the dual are the primal columns
    row_lo = np.where(np.isfinite(lo), -INF, lp.c)
    row_hi = np.where(np.isfinite(lo) | ~np.isfinite(hi), lp.c, INF)
    col_lo = np.full(m, -INF)
    col_hi = np.concatenate([np.full(m_eq, INF), np.zeros(m - m_eq)])

    h = _new_solver(feas_tol, opt_tol)
    _pass(h, -b, col_lo, col_hi, row_lo, row_hi, A.T.tocsc())
    h.run()
    iters = int(h.getInfo().simplex_iteration_count)
    if _status(h) != "optimal":
        return solve_highs(lp, feas_tol, opt_tol)
    sol = h.getSolution()
    x = np.clip(off - np.array(sol.row_dual), lo, hi)
    y = np.array(sol.col_value)
    obj = float(lp.c @ x)
    dual_obj = float(b @ y + lp.c @ off)
    scale = 1.0 + float(np.max(np.abs(b), initial=0.0))
    if lp.residuals(x) > feas_tol * scale or abs(obj - dual_obj) > max(opt_tol, 1e-9) * 1e2 * (1.0 + abs(obj)):
        return solve_highs(lp, feas_tol, opt_tol)
    return LpSolution("optimal", x, obj, iters, "highs-dual")
