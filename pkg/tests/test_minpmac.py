import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macalloc import capacity
from macalloc.errors import DomainError, InfeasibleError, ShapeError
from macalloc.minpmac import (
    SolverOptions,
    decode_order_from_duals,
    inner_weighted_tradeoff,
    max_rate_scaling,
    max_sum_rate,
    mbps_to_bits,
    solve_min_energy,
    verify_solution,
)

from conftest import random_channels, scalar_channels


def test_single_user_tradeoff_closed_form():
    # d/dp [theta log2(1+p) - p] = 0 at p = theta/ln2 - 1
    ch = scalar_channels([[1.0]])
    p, r = inner_weighted_tradeoff(ch, [2 * math.log(2)], [1.0], 0)
    assert p[0] == pytest.approx(1.0, abs=1e-9)
    assert r[0] == pytest.approx(1.0, abs=1e-9)
    # a price below ln2 buys nothing
    p, r = inner_weighted_tradeoff(ch, [0.5 * math.log(2)], [1.0], 0)
    assert p[0] == 0.0 and r[0] == 0.0


def test_single_user_equal_tones_spreads_evenly():
    # equal gains: r bits over S tones cost S (2^(r/S) - 1) sigma2 / |g|^2
    ch = scalar_channels([[0.5, 0.5, 0.5]], sigma2=0.2)
    sol = solve_min_energy(ch, [3.0])
    assert sol.objective == pytest.approx(3 * (2 ** 1 - 1) * 0.2 / 0.25, rel=1e-6)
    assert np.allclose(sol.alloc.powers, sol.alloc.powers[0, 0], rtol=1e-5)


def test_single_user_water_filling():
    # gains 4 and 1, sigma2 = 1: water level mu with 1/4 and 1 floors
    ch = scalar_channels([[2.0, 1.0]])
    sol = solve_min_energy(ch, [3.0])
    # both tones active: log2(4 mu) + log2(mu) = 3 -> mu = sqrt(2)
    mu = math.sqrt(2.0)
    assert sol.objective == pytest.approx((mu - 0.25) + (mu - 1.0), rel=1e-6)
    sol = solve_min_energy(ch, [1.0])
    # small target: only the strong tone, 4p = 1
    assert sol.objective == pytest.approx(0.25, rel=1e-6)
    assert sol.alloc.powers[0, 1] == pytest.approx(0.0, abs=1e-9)


def test_zero_targets_cost_nothing():
    sol = solve_min_energy(random_channels(), np.zeros(3))
    assert sol.objective == 0.0
    assert np.all(sol.alloc.powers == 0)


def test_decode_order_examples():
    assert decode_order_from_duals([3.0, 1.0, 2.0]) == [(1,), (2,), (0,)]
    assert decode_order_from_duals([1.0, 1.0 + 1e-9, 5.0]) == [(0, 1), (2,)]
    assert decode_order_from_duals([2.0, 2.0, 2.0]) == [(0, 1, 2)]
    with pytest.raises(DomainError):
        decode_order_from_duals([-1.0, 1.0])


def test_input_checks():
    ch = random_channels()
    with pytest.raises(ShapeError):
        solve_min_energy(ch, [1.0, 1.0])
    with pytest.raises(DomainError):
        solve_min_energy(ch, [1.0, -1.0, 1.0])
    with pytest.raises(DomainError):
        solve_min_energy(ch, [1.0, 1.0, 1.0], alpha=[1.0, 0.0, 1.0])


def test_power_cap_can_make_targets_infeasible():
    ch = random_channels(snr_db=0.0)
    with pytest.raises(InfeasibleError):
        solve_min_energy(ch, [40.0, 40.0, 40.0], opts=SolverOptions(power_cap=1.0))


def _random_case(seed, N=3, S=4):
    rng = np.random.Generator(np.random.PCG64(seed))
    snr = float(rng.uniform(0, 25))
    ch = random_channels(N, S, 1, snr_db=snr, seed=seed, dist=tuple(rng.uniform(2, 6, N)))
    r = rng.uniform(0.2, 2.0, N) * S
    return ch, r


@given(st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_solutions_verify(seed):
    ch, r = _random_case(seed)
    sol = solve_min_energy(ch, r)
    rep = verify_solution(ch, r, sol)
    assert rep.passed, rep.failed()
    assert sol.diagnostics["duality_gap"] <= 1e-4
    assert capacity.check_polymatroid(ch, sol.alloc.powers, sol.achieved, 1e-9)
    assert np.all(sol.achieved >= r - 1e-6)


def test_solution_matches_lower_bound():
    ch, r = _random_case(17)
    sol = solve_min_energy(ch, r)
    assert sol.diagnostics["dual_bound"] <= sol.objective
    assert sol.objective <= sol.diagnostics["dual_bound"] * (1 + 1e-4)


def test_energy_grows_with_targets():
    ch, r = _random_case(3)
    e = [solve_min_energy(ch, s * r).objective for s in (0.5, 1.0, 1.5)]
    assert e[0] < e[1] < e[2]


def test_alpha_scaling():
    ch, r = _random_case(5)
    a = np.array([1.0, 2.0, 0.5])
    s1 = solve_min_energy(ch, r, a)
    s2 = solve_min_energy(ch, r, 3.0 * a)
    assert s2.objective == pytest.approx(3.0 * s1.objective, rel=1e-4)
    assert s1.objective == pytest.approx(a @ s1.alloc.powers.sum(axis=1), rel=1e-12)


def test_heavier_weight_shifts_energy_away():
    ch, r = _random_case(8)
    base = solve_min_energy(ch, r).alloc.per_user_energy
    heavy = solve_min_energy(ch, r, [10.0, 1.0, 1.0]).alloc.per_user_energy
    assert heavy[0] < base[0]


def test_symmetric_users_share_a_cluster():
    ch = scalar_channels(np.ones((2, 2)), sigma2=0.1)
    sol = solve_min_energy(ch, [2.0, 2.0])
    assert len(sol.clusters) == 1
    assert abs(sol.duals[0] - sol.duals[1]) <= 1e-4 * max(1.0, sol.duals.max())
    assert np.all(sol.achieved >= 2.0 - 1e-6)


def test_mbps_conversion():
    ch = random_channels()
    assert np.allclose(mbps_to_bits(ch, [20.0, 40.0, 0.0]), [1.0, 2.0, 0.0])


def test_max_sum_rate_single_user():
    ch = scalar_channels([[1.0, 1.0]])
    sol = max_sum_rate(ch, 2.0)
    assert sol.alloc.total_energy == pytest.approx(2.0, rel=1e-9)
    assert sol.sum_rate == pytest.approx(2.0, rel=1e-6)


def test_max_rate_scaling_inverts_min_energy():
    ch, r = _random_case(11)
    energy = solve_min_energy(ch, r).objective
    assert max_rate_scaling(ch, r, energy) == pytest.approx(1.0, rel=1e-5)
    assert max_rate_scaling(ch, 0.5 * r, energy) == pytest.approx(2.0, rel=1e-5)
    with pytest.raises(DomainError):
        max_rate_scaling(ch, np.zeros(3), energy)


def test_max_sum_rate_beats_fixed_direction():
    ch, r = _random_case(12)
    sol = solve_min_energy(ch, r)
    best = max_sum_rate(ch, sol.objective)
    assert best.sum_rate >= sol.achieved.sum() - 1e-6
