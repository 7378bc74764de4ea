import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mqrlr.core import TimeSeries, build_lag_matrix

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def ar1_values(n: int, beta1: float = 0.3, seed: int = 0, beta0: float = 0.0, sigma: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    y = np.empty(n)
    prev = 0.0
    for t in range(n):
        prev = beta0 + beta1 * prev + sigma * e[t]
        y[t] = prev
    return y


@pytest.fixture(scope="session")
def ar1_series() -> TimeSeries:
    return TimeSeries(ar1_values(400, seed=11))


@pytest.fixture(scope="session")
def ar1_design(ar1_series):
    return build_lag_matrix(ar1_series, [1])


ACCEPTANCE = {}
N_CRITERIA = 10


class AcceptanceRecorder:
    def check(self, number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"AC{number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(ACCEPTANCE.get(n, f"AC{n:>2} FAIL  (not run or errored before a verdict)"))
