"""Random small LPs with integer data, shared by the solver tests."""

import numpy as np

from mqrlr.lpsolve import StandardLP


def random_lp(rng: np.random.Generator, max_vars: int = 5, max_rows: int = 5) -> StandardLP:
    n = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    m_eq = int(rng.integers(0, min(m, n) + 1))
    c = rng.integers(-5, 6, n)
    A = rng.integers(-5, 6, (m, n))
    b = rng.integers(-5, 6, m)
    free = rng.random(n) < 0.2
    lower = np.where(free, -np.inf, 0.0)
    upper = np.where(rng.random(n) < 0.2, rng.integers(1, 6, n).astype(float), np.inf)
    return StandardLP.build(c, A[:m_eq], b[:m_eq], A[m_eq:], b[m_eq:], lower, upper)
