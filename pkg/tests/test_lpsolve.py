import numpy as np
import pytest
import scipy.optimize as so
from hypothesis import given
from hypothesis import strategies as st

from _lpgen import random_lp
from mqrlr.errors import DomainError
from mqrlr.lpsolve import METHODS, StandardLP, brute_force_oracle, dump_lp, solve

ROUTES = [m for m in METHODS if m != "auto"]


def _x_ge_3():
    return StandardLP.build([1.0], A_le=[[-1.0]], b_le=[-3.0], lower=[-np.inf])


@pytest.mark.parametrize("method", ROUTES)
def test_min_x_above_three(method):
    sol = solve(_x_ge_3(), method=method)
    assert sol.optimal and sol.x[0] == pytest.approx(3) and sol.objective_value == pytest.approx(3)


@pytest.mark.parametrize("method", ROUTES)
def test_contradictory_bounds_infeasible(method):
    lp = StandardLP.build([0.0], A_le=[[-1.0], [1.0]], b_le=[-1.0, 0.0], lower=[-np.inf])
    assert solve(lp, method=method).status == "infeasible"


@pytest.mark.parametrize("method", ROUTES)
def test_simplex_face_matches_oracle(method):
    lp = StandardLP.build([-1.0, -1.0], A_le=[[1.0, 1.0]], b_le=[1.0])
    sol = solve(lp, method=method)
    ref = brute_force_oracle(lp)
    assert sol.optimal and ref.optimal
    assert sol.objective_value == pytest.approx(-1) == ref.objective_value
    assert lp.residuals(sol.x) <= 1e-9


@pytest.mark.parametrize("method", ROUTES)
def test_unbounded_ray(method):
    lp = StandardLP.build([-1.0])
    assert solve(lp, method=method).status == "unbounded"
    assert brute_force_oracle(lp).status == "unbounded"


def test_oracle_examples():
    assert brute_force_oracle(_x_ge_3()).objective_value == pytest.approx(3)
    lp = StandardLP.build([0.0], A_le=[[-1.0], [1.0]], b_le=[-1.0, 0.0], lower=[-np.inf])
    assert brute_force_oracle(lp).status == "infeasible"


def test_oracle_size_cap():
    with pytest.raises(DomainError):
        brute_force_oracle(StandardLP.build(np.ones(9)))


def test_oracle_free_variable_lineality():
    # x free, y >= 0; min y subject to x - y = 2: optimum 0 at x = 2
    lp = StandardLP.build([0.0, 1.0], A_eq=[[1.0, -1.0]], b_eq=[2.0], lower=[-np.inf, 0.0])
    assert brute_force_oracle(lp).objective_value == pytest.approx(0)


def _linprog_status(lp: StandardLP):
    res = so.linprog(lp.c, A_ub=lp.A_le.toarray() if lp.n_le else None, b_ub=lp.b_le if lp.n_le else None,
                     A_eq=lp.A_eq.toarray() if lp.n_eq else None, b_eq=lp.b_eq if lp.n_eq else None,
                     bounds=list(zip(lp.lower, lp.upper)), method="highs")
    return {0: "optimal", 2: "infeasible", 3: "unbounded"}[res.status], res.fun


@pytest.mark.parametrize("method", ROUTES)
def test_random_lps_agree_with_oracle_and_linprog(method):
    rng = np.random.default_rng(2024)
    for _ in range(150):
        lp = random_lp(rng)
        sol = solve(lp, method=method)
        ref = brute_force_oracle(lp)
        status, fun = _linprog_status(lp)
        assert sol.status == ref.status == status
        if sol.optimal:
            assert abs(sol.objective_value - ref.objective_value) <= 1e-8 * (1 + abs(ref.objective_value))
            assert abs(sol.objective_value - fun) <= 1e-7 * (1 + abs(fun))
            assert lp.residuals(sol.x) <= 1e-7


@given(st.integers(0, 2**32 - 1))
def test_property_random_three_var_lps(seed):
    lp = random_lp(np.random.default_rng(seed), max_vars=3, max_rows=4)
    sol, ref = solve(lp), brute_force_oracle(lp)
    assert sol.status == ref.status
    if sol.optimal:
        assert sol.objective_value == pytest.approx(ref.objective_value, abs=1e-8)


@pytest.mark.parametrize("method", ROUTES)
def test_deterministic(method):
    lp = random_lp(np.random.default_rng(5))
    a, b = solve(lp, method=method), solve(lp, method=method)
    assert a.status == b.status
    if a.optimal:
        assert a.x.tobytes() == b.x.tobytes()


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_objective_scaling_keeps_argmin(seed, k):
    lp = random_lp(np.random.default_rng(seed))
    base = solve(lp)
    if not base.optimal:
        return
    scaled = lp.scaled(k)
    sol = solve(scaled)
    assert sol.optimal
    # the point returned for the scaled problem is optimal for the original too
    assert lp.residuals(sol.x) <= 1e-7
    assert lp.c @ sol.x == pytest.approx(base.objective_value, abs=1e-7 * (1 + abs(base.objective_value)))


def test_unknown_method_and_bad_tolerance():
    with pytest.raises(DomainError):
        solve(_x_ge_3(), method="nope")
    with pytest.raises(DomainError):
        solve(_x_ge_3(), feas_tol=0)


def test_build_validation():
    with pytest.raises(DomainError):
        StandardLP.build([1.0, 2.0], A_le=[[1.0]], b_le=[1.0])
    with pytest.raises(DomainError):
        StandardLP.build([1.0], lower=[2.0], upper=[1.0])
    with pytest.raises(DomainError):
        StandardLP.build([np.nan])


def test_box_bounded_variables():
    # max x + y with 1 <= x <= 2, -3 <= y <= -1
    lp = StandardLP.build([-1.0, -1.0], lower=[1.0, -3.0], upper=[2.0, -1.0])
    for method in ROUTES:
        sol = solve(lp, method=method)
        np.testing.assert_allclose(sol.x, [2.0, -1.0], atol=1e-9)


def test_degenerate_cycling_example():
    # Beale's example cycles under naive Dantzig pricing
    c = [-0.75, 150.0, -0.02, 6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    lp = StandardLP.build(c, A_le=A, b_le=[0.0, 0.0, 1.0])
    sol = solve(lp, method="simplex")
    assert sol.optimal and sol.objective_value == pytest.approx(-0.05)


def test_dump_lp_format(tmp_path):
    lp = StandardLP.build([1.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[2.0], A_le=[[1.0, -1.0]], b_le=[0.5],
                          var_labels=("a", "b"))
    p = tmp_path / "lp.txt"
    dump_lp(lp, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "# mqrlr-lp 1"
    assert lines[1] == "vars 2 eq 1 le 1"
    assert lines[2] == "min: 1.0 a"
    assert lines[3] == "eq e0: 1.0 a + 1.0 b = 2.0"
    assert lines[4] == "le l0: 1.0 a + -1.0 b <= 0.5"
    assert lines[5:] == ["bound a 0.0 inf", "bound b 0.0 inf"]
