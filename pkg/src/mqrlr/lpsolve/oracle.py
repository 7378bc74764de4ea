"""Vertex-enumeration reference solver for tiny LPs (tests only)."""

from __future__ import annotations

from itertools import combinations

import numpy as np
from scipy.linalg import null_space

from ..errors import DomainError
from .problem import LpSolution, StandardLP

MAX_VARS = 8
MAX_ROWS = 10


def _inequalities(lp: StandardLP):
    """All constraints as ``G x <= h`` plus equalities ``E x = f``."""
    n = lp.n_vars
    G = [lp.A_le.toarray()] if lp.n_le else []
    h = [lp.b_le] if lp.n_le else []
    for j in range(n):
        if np.isfinite(lp.lower[j]):
            row = np.zeros((1, n))
            row[0, j] = -1.0
            G.append(row)
            h.append([-lp.lower[j]])
        if np.isfinite(lp.upper[j]):
            row = np.zeros((1, n))
            row[0, j] = 1.0
            G.append(row)
            h.append([lp.upper[j]])
    G = np.vstack(G) if G else np.zeros((0, n))
    h = np.concatenate(h) if h else np.zeros(0)
    return G, h, lp.A_eq.toarray(), lp.b_eq.copy()


def brute_force_oracle(lp: StandardLP, tol: float = 1e-9) -> LpSolution:
    if lp.n_vars > MAX_VARS or lp.n_eq + lp.n_le > MAX_ROWS:
        raise DomainError(f"oracle handles at most {MAX_VARS} variables and {MAX_ROWS} constraints")
    G, h, E, f = _inequalities(lp)
    c = lp.c
    n = lp.n_vars

    # Lineality space of the feasible set: directions that leave every constraint unchanged.
    N = null_space(np.vstack([G, E])) if (G.shape[0] + E.shape[0]) else np.eye(n)
    if N.shape[1]:
        # restricting to the orthogonal complement makes the polyhedron pointed
        E = np.vstack([E, N.T])
        f = np.concatenate([f, np.zeros(N.shape[1])])

    def feasible(x):
        return (G.shape[0] == 0 or np.all(G @ x <= h + tol * (1 + np.abs(h)))) and (
            E.shape[0] == 0 or np.all(np.abs(E @ x - f) <= tol * (1 + np.abs(f)))
        )

    best_x, best_val = None, np.inf
    n_free = n - np.linalg.matrix_rank(E) if E.shape[0] else n
    for active in combinations(range(G.shape[0]), max(n_free, 0)):
        M = np.vstack([E, G[list(active)]]) if active else E
        rhs = np.concatenate([f, h[list(active)]]) if active else f
        if M.shape[0] == 0 or np.linalg.matrix_rank(M) < n:
            continue
        x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        if not np.allclose(M @ x, rhs, atol=1e-9, rtol=1e-9) or not feasible(x):
            continue
        val = float(c @ x)
        if val < best_val - 1e-12:
            best_x, best_val = x, val
    if best_x is None:
        return LpSolution("infeasible", method="oracle")

    if N.shape[1] and np.any(np.abs(N.T @ c) > tol):
        return LpSolution("unbounded", method="oracle")
    # extreme rays of the recession cone {d : G d <= 0, E d = 0}
    for active in combinations(range(G.shape[0]), max(n_free - 1, 0)):
        M = np.vstack([E, G[list(active)]]) if active else E
        if M.shape[0] == 0:
            dirs = np.eye(n)
        else:
            dirs = null_space(M)
            if dirs.shape[1] != 1:
                continue
        for d in np.hstack([dirs, -dirs]).T:
            if (G.shape[0] == 0 or np.all(G @ d <= tol)) and c @ d < -tol:
                return LpSolution("unbounded", method="oracle")
    return LpSolution("optimal", best_x, best_val, method="oracle")
