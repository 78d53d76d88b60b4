import math

import numpy as np
import pytest

from macalloc import capacity
from macalloc.baselines import (
    GridSpec,
    brute_force_max_sum_rate,
    brute_force_min_energy,
    feasible_grid_bound,
    noma_fixed_budget,
    noma_heuristic_allocate,
    oma_allocate,
    oma_fixed_budget,
)
from macalloc.errors import DomainError, InfeasibleError, SizeError
from macalloc.minpmac import max_sum_rate, solve_min_energy

from conftest import random_channels, scalar_channels


def test_grid_spec():
    g = GridSpec(5, 2.0)
    assert g.step == 0.5
    assert np.array_equal(g.values(), [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(DomainError):
        GridSpec(1, 1.0)
    with pytest.raises(DomainError):
        GridSpec(10, 0.0)


def test_brute_single_dimension_exact():
    # one user, one tone, |g|^2 = 1: target 1 bit needs p = 1, which is on the grid
    ch = scalar_channels([[1.0]])
    res = brute_force_min_energy(ch, [1.0], GridSpec(11, 2.0))
    assert res.objective == pytest.approx(1.0)
    assert res.level_index == (5,)


def test_brute_rounds_up_to_grid():
    ch = scalar_channels([[1.0]])
    res = brute_force_min_energy(ch, [1.0], GridSpec(4, 3.0))  # levels 0, 1, 2, 3
    assert res.objective == pytest.approx(1.0)
    res = brute_force_min_energy(ch, [1.1], GridSpec(4, 3.0))
    assert res.objective == pytest.approx(2.0)


def test_brute_infeasible_grid():
    ch = scalar_channels([[1.0]])
    with pytest.raises(InfeasibleError):
        brute_force_min_energy(ch, [5.0], GridSpec(10, 1.0))


def test_brute_size_guard():
    with pytest.raises(SizeError):
        brute_force_min_energy(random_channels(3, 4), [1.0, 1.0, 1.0], GridSpec(10, 1.0))


def test_brute_matches_exhaustive_scan():
    # a tiny grid enumerated point by point with the polymatroid test
    ch = random_channels(2, 2, 1, snr_db=10.0, seed=4)
    r = np.array([1.5, 1.0])
    grid = GridSpec(9, feasible_grid_bound(ch, r))
    res = brute_force_min_energy(ch, r, grid)
    vals = grid.values()
    best = math.inf
    for idx in np.ndindex(9, 9, 9, 9):
        p = vals[list(idx)].reshape(2, 2)
        if p.sum() < best and capacity.check_polymatroid(ch, p, r, 1e-12):
            best = p.sum()
    assert res.objective == pytest.approx(best, rel=1e-12)


def test_brute_ignores_zero_target_users():
    ch = random_channels(2, 2, 1, seed=1)
    res = brute_force_min_energy(ch, [1.0, 0.0], GridSpec(50, feasible_grid_bound(ch, [1.0, 0.0])))
    assert np.all(res.alloc.powers[1] == 0)


def test_brute_is_close_to_solver_from_above():
    ch = random_channels(2, 2, 1, snr_db=15.0, seed=2)
    r = np.array([2.0, 3.0])
    exact = solve_min_energy(ch, r).objective
    res = brute_force_min_energy(ch, r, GridSpec(300, feasible_grid_bound(ch, r)))
    assert exact <= res.objective * (1 + 1e-6)
    assert res.objective <= exact * 1.02


def test_brute_max_sum_rate_below_exact():
    ch = random_channels(2, 2, 1, snr_db=10.0, seed=3)
    res = brute_force_max_sum_rate(ch, 2.0, GridSpec(60, 2.0))
    exact = max_sum_rate(ch, 2.0).sum_rate
    assert res.alloc.total_energy <= 2.0 + 1e-12
    assert res.info["sum_rate"] <= exact + 1e-9
    assert res.info["sum_rate"] >= 0.97 * exact


def test_oma_meets_targets_on_own_tones():
    ch = random_channels(3, 6, 1, seed=5)
    r = np.array([2.0, 3.0, 1.0])
    res = oma_allocate(ch, r)
    assert np.all(res.rates >= r - 1e-9)
    # every tone has exactly one owner and no one transmits on a tone they do not own
    assert np.all((res.shares > 0).sum(axis=0) == 1)
    assert np.all(res.alloc.powers[res.shares == 0] == 0)
    assert list(res.assignment) == [0, 1, 2, 0, 1, 2]


def test_oma_power_cap():
    ch = random_channels(3, 6, 1, snr_db=0.0, seed=5)
    with pytest.raises(InfeasibleError):
        oma_allocate(ch, [30.0, 30.0, 30.0], power_cap=0.1)


def test_oma_fixed_budget_splits_evenly():
    ch = random_channels(3, 6, 1, seed=6)
    res = oma_fixed_budget(ch, 3.0, alpha=[1.0, 2.0, 3.0])
    assert res.alloc.objective == pytest.approx(3.0)
    assert np.allclose(res.alloc.per_user_energy, 0.5)


def test_noma_two_user_back_substitution():
    # strong user decoded first sees the weak user as interference
    ch = scalar_channels([[2.0], [1.0]], sigma2=1.0)
    res = noma_heuristic_allocate(ch, [1.0, 1.0])
    p = res.alloc.powers[:, 0]
    assert p[1] == pytest.approx(1.0)
    assert p[0] == pytest.approx((1.0 + p[1]) / 4.0)
    assert np.allclose(res.rates, [1.0, 1.0])
    assert res.orders == [(0, 1)]


def test_noma_rates_meet_targets():
    ch = random_channels(3, 4, 1, seed=9)
    r = np.array([2.0, 4.0, 3.0])
    res = noma_heuristic_allocate(ch, r)
    assert np.allclose(res.rates, r, rtol=1e-9)
    assert capacity.check_polymatroid(ch, res.alloc.powers, res.rates, 1e-9)


def test_noma_fixed_budget():
    ch = random_channels(3, 4, 1, seed=10)
    res = noma_fixed_budget(ch, 6.0)
    assert np.allclose(res.alloc.powers, 0.5)
    assert np.all(res.rates >= 0)


def test_optimum_beats_heuristics():
    ch = random_channels(3, 4, 1, snr_db=20.0, seed=11, dist=(2.0, 3.0, 5.0))
    r = np.array([4.0, 4.0, 4.0])
    e = solve_min_energy(ch, r).objective
    assert e <= oma_allocate(ch, r).alloc.objective
    assert e <= noma_heuristic_allocate(ch, r).alloc.objective


def test_grid_bound_covers_optimum():
    ch = random_channels(2, 2, 1, seed=12)
    r = np.array([1.0, 2.0])
    p = solve_min_energy(ch, r).alloc.powers
    assert p.max() <= feasible_grid_bound(ch, r)
