"""Linear-programming layer used by the estimator.

``solve`` certifies an optimum (or proves infeasibility/unboundedness) with
one of three routes:

``simplex``
    dense two-phase tableau simplex written here; exact for small problems.
``highs``
    the HiGHS solver applied to the LP as given.
``highs-dual``
    HiGHS on the explicit dual, with the primal point recovered from the
    dual multipliers; the fast route for the estimator's tall LPs.

``auto`` picks ``simplex`` while the dense tableau stays small and
``highs-dual`` beyond that.
"""

from __future__ import annotations

from .highs import solve_highs, solve_highs_dual
from .oracle import brute_force_oracle
from .problem import LpSolution, StandardLP, dump_lp
from .simplex import solve_simplex
from ..errors import DomainError

DEFAULT_FEAS_TOL = 1e-7
DEFAULT_OPT_TOL = 1e-9
METHODS = ("auto", "simplex", "highs", "highs-dual")

# dense tableau cells (rows x columns) above which ``auto`` leaves the simplex
AUTO_DENSE_LIMIT = 250_000


def _dense_size(lp: StandardLP) -> int:
    m = lp.n_eq + lp.n_le
    return (m + 1) * (2 * lp.n_vars + 2 * m + 1)


def solve(lp: StandardLP, feas_tol: float = DEFAULT_FEAS_TOL, opt_tol: float = DEFAULT_OPT_TOL,
          method: str = "auto") -> LpSolution:
    if not (feas_tol > 0 and opt_tol > 0):
        raise DomainError("tolerances must be positive")
    if method == "auto":
        method = "simplex" if _dense_size(lp) <= AUTO_DENSE_LIMIT else "highs-dual"
    if method == "simplex":
        return solve_simplex(lp, feas_tol, opt_tol)
    if method == "highs":
        return solve_highs(lp, feas_tol, opt_tol)
    if method == "highs-dual":
        return solve_highs_dual(lp, feas_tol, opt_tol)
    raise DomainError(f"unknown LP method {method!r}; choose from {METHODS}")


__all__ = [
    "LpSolution",
    "StandardLP",
    "brute_force_oracle",
    "dump_lp",
    "solve",
    "solve_simplex",
    "solve_highs",
    "solve_highs_dual",
    "METHODS",
    "DEFAULT_FEAS_TOL",
    "DEFAULT_OPT_TOL",
]
