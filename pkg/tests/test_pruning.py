import itertools

import numpy as np
import pytest

from adviser.domain import ConfigError, Kind, ProbabilityTable, money
from adviser.pruning import drive_utility, greedy_prune

from conftest import PAPER_COSTS, chain_table, make_instance, place_mothers, tiny_grid


def colocated_instance(n, p_none=0.0, horizon=1, n_cols=1, **kw):
    grid = tiny_grid(n_cols=n_cols)
    lat, lon = grid.cell_center(0)
    mothers = place_mothers(grid, [(lat, lon)] * n, horizon=horizon,
                            windows=[(1, horizon)] * n)
    table = ProbabilityTable({i: (p_none, max(p_none, 0.1), max(p_none, 0.2),
                                  max(p_none, 0.3), 1.0) for i in range(n)})
    return make_instance(mothers, table, grid=grid, horizon=horizon, **kw)


def test_drive_utility_empty():
    inst = colocated_instance(1)
    assert drive_utility(inst, inst.probabilities, [], 5) == (0.0, [])


def test_drive_utility_top_k_matches_subset_enumeration():
    grid = tiny_grid()
    lat, lon = grid.cell_center(0)
    mothers = place_mothers(grid, [(lat, lon)] * 3, horizon=1, windows=[(1, 1)] * 3)
    table = ProbabilityTable({0: (0.5, 0.5, 0.5, 0.5, 1.0),   # gain 0.5
                              1: (0.6, 0.6, 0.6, 0.6, 1.0),   # gain 0.4
                              2: (0.7, 0.7, 0.7, 0.7, 1.0)})  # gain 0.3
    inst = make_instance(mothers, table, grid=grid, horizon=1)
    value, chosen = drive_utility(inst, table, [0, 1, 2], 2)
    # oracle: enumerate every subset of size <= 2
    gains = {m: table.gain(m, Kind.VACCINE_DRIVE) for m in (0, 1, 2)}
    best = max(sum(gains[m] for m in s)
               for r in range(3) for s in itertools.combinations((0, 1, 2), r))
    assert value == pytest.approx(best) == pytest.approx(0.9)
    assert chosen == [0, 1]


def test_drive_utility_zero_gains():
    inst = colocated_instance(3, p_none=1.0)
    value, chosen = drive_utility(inst, inst.probabilities, [0, 1, 2], 2)
    assert value == 0.0
    assert len(chosen) == 2


def test_threshold_equal_budget_runs_one_iteration():
    # guard is budget >= threshold, so exactly one sweep happens; with no
    # committable drive the state is unchanged apart from the visit marks
    inst = colocated_instance(1, costs=PAPER_COSTS, budget=money(100))
    state = greedy_prune(inst, inst.probabilities, threshold=money(100))
    assert state.iterations == 1
    assert state.committed == []
    assert state.remaining_budget == money(100)
    assert len(state.visited) == 1


def test_twenty_colocated_mothers_commit_one_drive():
    # 20 vouchers at 1.1 cost 22 >= one drive at 15, so the drive fires
    inst = colocated_instance(20, costs=PAPER_COSTS, budget=money(100),
                              drive_capacity=100)
    state = greedy_prune(inst, inst.probabilities, threshold=money(0))
    assert len(state.committed) == 1
    assert len(state.committed[0].mothers) == 20
    assert state.remaining_mothers == []
    assert state.remaining_budget == money(100) - money(15)


def test_single_mother_not_worth_a_drive():
    inst = colocated_instance(1, costs=PAPER_COSTS, budget=money(100))
    state = greedy_prune(inst, inst.probabilities, threshold=money(0))
    assert state.committed == []
    assert state.remaining_mothers == [0]


def test_threshold_above_budget_rejected():
    inst = colocated_instance(1, budget=money(10))
    with pytest.raises(ConfigError):
        greedy_prune(inst, inst.probabilities, threshold=money(11))


def test_budget_never_goes_negative():
    # cheap-drive costs: drive 2.2 and 3 mothers worth 3 vouchers = 3.3
    inst = colocated_instance(3, budget=money("2.1"))
    state = greedy_prune(inst, inst.probabilities, threshold=0)
    assert state.committed == []
    assert state.remaining_budget == money("2.1")


def test_drive_cap_respected():
    inst = colocated_instance(6, horizon=2, budget=money(30), drive_capacity=3,
                              drive_cap=1)
    state = greedy_prune(inst, inst.probabilities, threshold=0)
    assert len(state.committed) <= 1


def test_committed_utilities_non_increasing_and_disjoint():
    rng = np.random.default_rng(5)
    for seed in range(20):
        r = np.random.default_rng(seed)
        grid = tiny_grid(n_cols=3)
        n = int(r.integers(5, 12))
        pts = [(float(r.uniform(grid.lat_min, grid.lat_max)),
                float(r.uniform(grid.lon_min, grid.lon_max))) for _ in range(n)]
        horizon = int(r.integers(1, 3))
        windows = []
        for _ in range(n):
            s = int(r.integers(1, horizon + 1))
            windows.append((s, int(r.integers(s, horizon + 1))))
        mothers = place_mothers(grid, pts, horizon=horizon, windows=windows)
        table = chain_table(r, n)
        inst = make_instance(mothers, table, grid=grid, horizon=horizon,
                             budget=money(int(r.integers(5, 30))),
                             drive_capacity=int(r.integers(2, 5)))
        state = greedy_prune(inst, table, threshold=0)

        utilities = [c.utility for c in state.committed]
        assert all(a >= b - 1e-12 for a, b in zip(utilities, utilities[1:]))

        seen = set()
        for c in state.committed:
            assert not (set(c.mothers) & seen)
            seen |= set(c.mothers)
            assert len(c.mothers) <= inst.drive_capacity
            for m in c.mothers:
                mom = inst.mother(m)
                assert mom.elig_start <= c.day <= mom.elig_end
                assert inst.distance_km(m, c.cell) <= inst.drive_radius_km + 1e-9
        assert state.remaining_budget == inst.budget - inst.costs.drive * len(state.committed)
        assert sorted(state.pruned_mothers | set(state.remaining_mothers)) == [
            m.id for m in inst.mothers]


def test_prune_deterministic():
    inst = colocated_instance(20, costs=PAPER_COSTS, budget=money(100), drive_capacity=10,
                              horizon=2)
    a = greedy_prune(inst, inst.probabilities, threshold=0)
    b = greedy_prune(inst, inst.probabilities, threshold=0)
    assert [(c.cell, c.day, c.mothers) for c in a.committed] == \
           [(c.cell, c.day, c.mothers) for c in b.committed]
    assert a.remaining_mothers == b.remaining_mothers
