import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from macalloc import capacity
from macalloc.errors import InfeasibleError, ShapeError, SizeError
from macalloc.lp import simplex
from macalloc.timeshare import TimeShareProblem, candidate_orders, separation_certificate, solve_timeshare

from conftest import random_channels


@given(st.integers(0, 10**6))
@settings(max_examples=80, deadline=None)
def test_simplex_matches_scipy(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    m, n = int(rng.integers(1, 5)), int(rng.integers(2, 9))
    A = rng.normal(size=(m, n))
    x_feas = rng.exponential(size=n) * (rng.random(n) < 0.7)
    b = A @ x_feas
    c = rng.normal(size=n)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, None)] * n, method="highs")
    got = simplex(c, A, b)
    if ref.status == 3:
        assert got.status == "unbounded"
    else:
        assert ref.status == 0
        assert got.status == "optimal"
        assert got.objective == pytest.approx(ref.fun, rel=1e-7, abs=1e-7)
        assert np.allclose(A @ got.x, b, atol=1e-8)
        assert np.all(got.x >= -1e-12)


def test_simplex_infeasible():
    res = simplex(np.zeros(2), np.array([[1.0, 1.0]]), np.array([-1.0]))
    assert res.status == "infeasible"
    assert res.infeasibility > 0


def test_simplex_negative_rhs_and_degenerate():
    # x1 - x2 = -1, x1 + x2 = 3  ->  x = (1, 2)
    res = simplex(np.array([1.0, 1.0]), np.array([[1.0, -1.0], [1.0, 1.0]]), np.array([-1.0, 3.0]))
    assert res.status == "optimal"
    assert np.allclose(res.x, [1.0, 2.0])
    # a redundant row does not upset phase one
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
    res = simplex(np.array([1.0, 2.0, 0.0]), A, np.array([1.0, 2.0]))
    assert res.status == "optimal" and res.objective == pytest.approx(1.0)


def test_candidate_orders_examples():
    assert candidate_orders([(0,), (2,), (1,)]) == [(0, 2, 1)]
    assert candidate_orders([(0, 1), (2,)]) == [(0, 1, 2), (1, 0, 2)]
    assert len(candidate_orders([(0, 1, 2)])) == 6
    with pytest.raises(SizeError):
        candidate_orders([tuple(range(7))])


def _problem(R, r):
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return TimeShareProblem([(k,) for k in range(len(R))], R, np.asarray(r, dtype=float))


def test_timeshare_examples():
    ts = solve_timeshare(_problem([[2, 1], [1, 2]], [1.5, 1.5]))
    assert np.allclose(ts.weights, [0.5, 0.5]) and ts.support == 2
    ts = solve_timeshare(_problem([[2, 1]], [2, 1]))
    assert np.allclose(ts.weights, [1.0]) and ts.support == 1
    ts = solve_timeshare(_problem([[3, 0], [0, 3], [1.5, 1.5]], [1.5, 1.5]))
    assert ts.support == 1 and ts.active[2] and ts.weights[2] == pytest.approx(1.0)


def test_timeshare_infeasible_has_certificate():
    prob = _problem([[2, 1], [1, 2]], [2, 2])
    with pytest.raises(InfeasibleError) as err:
        solve_timeshare(prob)
    d = np.asarray(err.value.certificate["direction"])
    # separating direction: d.r_th exceeds d.R_j for every vertex
    assert np.all(prob.vertex_rates @ d < d @ prob.targets)
    d2, margin = separation_certificate(prob.vertex_rates, prob.targets)
    assert margin > 0 and np.abs(d2).sum() == pytest.approx(1.0)


def test_problem_shape_checks():
    with pytest.raises(ShapeError):
        TimeShareProblem([(0, 1)], np.ones((2, 2)), np.ones(2))


def _brute_min_support(R, r, tol):
    """Smallest k such that some k-subset of vertices covers r (scipy LP per subset)."""
    n = len(R)
    for k in range(1, n + 1):
        for sub in itertools.combinations(range(n), k):
            res = linprog(np.zeros(k), A_ub=np.hstack([-R[list(sub)].T]), b_ub=-(r - tol),
                          A_eq=np.ones((1, k)), b_eq=[1.0], bounds=[(0, 1)] * k, method="highs")
            if res.status == 0:
                return k
    return None


@given(st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_minimal_support_exhaustive(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    ch = random_channels(3, 2, 1, snr_db=float(rng.uniform(0, 20)), seed=seed)
    p = rng.exponential(size=(3, 2))
    orders = capacity.enumerate_orders(3)
    R = np.array([capacity.sic_rates(ch, p, o) for o in orders])
    w = rng.dirichlet(np.ones(6) * 0.5)
    r = w @ R
    ts = solve_timeshare(TimeShareProblem(orders, R, r), tol=1e-9)
    assert ts.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(ts.weights >= 0) and np.all(ts.weights <= ts.active + 1e-15)
    assert np.all(ts.achieved >= r - 1e-9)
    assert np.allclose(ts.weights @ R, ts.achieved, atol=1e-12)
    assert ts.support == _brute_min_support(R, r, 1e-9)
    # one power allocation for all orders: the averaged rates stay in the region
    assert capacity.check_polymatroid(ch, p, ts.achieved, 1e-9)


def test_exact_mode():
    ts = solve_timeshare(_problem([[2, 1], [1, 2], [3, 3]], [1.5, 1.5]), exact=True)
    assert np.allclose(ts.achieved, [1.5, 1.5], atol=1e-12)
    assert math.isclose(ts.weights.sum(), 1.0)
