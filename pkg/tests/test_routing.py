import itertools

import numpy as np
import pytest

from adviser.domain import Bus, Depot, Fleet, InputError, Kind, ProbabilityTable, VaccinationCenter
from adviser.routing import (
    GlsConfig,
    RoutePlan,
    RoutePoolConfig,
    RoutingNode,
    cheapest_insertion,
    generate_route_pool,
    guided_local_search,
    make_travel_time,
    node_utility,
    pickup_node,
    route_feasible,
    _plan_with_nodes,
)

from conftest import (
    TEST_POOL_CONFIG,
    chain_table,
    make_instance,
    place_mothers,
    random_tiny_instance,
    tiny_grid,
)

TT = make_travel_time(25.0)


def simple_nodes(grid):
    depot = RoutingNode("depot", 0, grid.lat_min, grid.lon_min, 0, 1440)
    center = RoutingNode("dropoff", 0, grid.lat_max, grid.lon_max, 480, 1020)
    return depot, center


def test_node_utility_is_pickup_gain():
    table = ProbabilityTable({0: (0.2, 0.3, 0.4, 0.9, 1.0)})
    assert node_utility(table, 0) == pytest.approx(0.7)
    table2 = ProbabilityTable({0: (0.5, 0.5, 0.5, 0.5, 1.0)})
    assert node_utility(table2, 0) == 0.0
    with pytest.raises(InputError):
        node_utility(table, 9)


def test_node_utility_ordering_matches_recomputation():
    rng = np.random.default_rng(8)
    table = chain_table(rng, 10)
    by_utility = sorted(range(10), key=lambda m: (-node_utility(table, m), m))
    by_direct = sorted(range(10), key=lambda m: (-(table.row(m)[3] - table.row(m)[0]), m))
    assert by_utility == by_direct


def test_route_feasible_simple_and_violations():
    grid = tiny_grid()
    depot, center = simple_nodes(grid)
    mothers = place_mothers(grid, [grid.cell_center(0)], horizon=1, windows=[(1, 1)])
    table = ProbabilityTable({0: (0.1, 0.2, 0.3, 0.4, 1.0)})
    plan = RoutePlan(0, 1, 0, 0, (depot, pickup_node(mothers[0]), center), (), (0,), 0.3)
    ok, why = route_feasible(plan, TT, capacity=2)
    assert ok and why is None

    # pickup window closed before the bus can arrive
    tight = RoutingNode("pickup", 0, mothers[0].lat, mothers[0].lon, 0, 0)
    bad = RoutePlan(0, 1, 0, 0, (depot, tight, center), (), (0,), 0.3)
    ok, why = route_feasible(bad, TT, capacity=2)
    assert not ok and "time window" in why

    # over capacity
    many = tuple(pickup_node(m) for m in place_mothers(
        grid, [grid.cell_center(0)] * 3, horizon=1, windows=[(1, 1)] * 3))
    over = RoutePlan(0, 1, 0, 0, (depot,) + many + (center,), (), (0, 1, 2), 0.9)
    ok, why = route_feasible(over, TT, capacity=2)
    assert not ok and "capacity" in why

    # wrong endpoints
    flipped = RoutePlan(0, 1, 0, 0, (center, depot), (), (), 0.0)
    ok, why = route_feasible(flipped, TT, capacity=2)
    assert not ok and "endpoints" in why


def test_cheapest_insertion_no_candidates():
    grid = tiny_grid()
    depot, center = simple_nodes(grid)
    table = ProbabilityTable({})
    plan = cheapest_insertion(1, center, depot, [], TT, table, capacity=3)
    assert plan.picked == ()
    assert plan.feasible
    assert [n.kind for n in plan.nodes] == ["depot", "dropoff"]


def test_cheapest_insertion_single_candidate_matches_position_enumeration():
    grid = tiny_grid()
    depot, center = simple_nodes(grid)
    mothers = place_mothers(grid, [grid.cell_center(0)], horizon=1, windows=[(1, 1)])
    table = ProbabilityTable({0: (0.1, 0.2, 0.3, 0.9, 1.0)})
    plan = cheapest_insertion(1, center, depot, mothers, TT, table, capacity=3)
    assert plan.picked == (0,)
    assert plan.feasible
    # oracle: the only insertion position is between depot and center
    trial = (depot, pickup_node(mothers[0]), center)
    oracle = _plan_with_nodes(plan, trial, TT, table)
    assert oracle.feasible
    assert plan.utility == pytest.approx(oracle.utility)


def test_cheapest_insertion_stops_at_capacity():
    grid = tiny_grid()
    depot, center = simple_nodes(grid)
    pts = [grid.cell_center(0)] * 5
    mothers = place_mothers(grid, pts, horizon=1, windows=[(1, 1)] * 5)
    table = chain_table(np.random.default_rng(1), 5)
    plan = cheapest_insertion(1, center, depot, mothers, TT, table, capacity=2)
    assert len(plan.picked) == 2
    assert plan.feasible


def _route_brute_force(day, center, depot, mothers, table, capacity):
    """Best utility over every ordered subset of pickups (the GLS oracle)."""
    best = 0.0
    base = RoutePlan(0, day, center.ref_id, depot.ref_id, (depot, center), (), (), 0.0)
    for r in range(1, min(capacity, len(mothers)) + 1):
        for subset in itertools.permutations(mothers, r):
            nodes = (depot,) + tuple(pickup_node(m) for m in subset) + (center,)
            cand = _plan_with_nodes(base, nodes, TT, table)
            if cand.feasible:
                best = max(best, cand.utility)
    return best


def test_gls_zero_budget_returns_initial():
    grid = tiny_grid()
    depot, center = simple_nodes(grid)
    mothers = place_mothers(grid, [grid.cell_center(0)], horizon=1, windows=[(1, 1)])
    table = ProbabilityTable({0: (0.1, 0.2, 0.3, 0.9, 1.0)})
    initial = cheapest_insertion(1, center, depot, [], TT, table, capacity=3)
    out = guided_local_search(initial, mothers, TT, table, capacity=3,
                              config=GlsConfig(time_limit_s=0))
    assert out is initial
    out2 = guided_local_search(initial, mothers, TT, table, capacity=3,
                               config=GlsConfig(time_limit_s=None, max_iterations=0))
    assert out2 is initial


def test_gls_reaches_brute_force_optimum_on_five_candidates():
    rng = np.random.default_rng(17)
    grid = tiny_grid(n_cols=3)
    depot, center = simple_nodes(grid)
    pts = [(float(rng.uniform(grid.lat_min, grid.lat_max)),
            float(rng.uniform(grid.lon_min, grid.lon_max))) for _ in range(5)]
    mothers = place_mothers(grid, pts, horizon=1, windows=[(1, 1)] * 5)
    table = chain_table(rng, 5)
    initial = cheapest_insertion(1, center, depot, mothers, TT, table, capacity=4)
    improved = guided_local_search(initial, mothers, TT, table, capacity=4,
                                   config=GlsConfig(time_limit_s=None, max_iterations=60))
    oracle = _route_brute_force(1, center, depot, mothers, table, capacity=4)
    assert improved.utility == pytest.approx(oracle, abs=1e-9)


def test_gls_never_loses_utility():
    for seed in range(12):
        rng = np.random.default_rng(seed)
        grid = tiny_grid(n_cols=3)
        depot, center = simple_nodes(grid)
        n = int(rng.integers(2, 7))
        pts = [(float(rng.uniform(grid.lat_min, grid.lat_max)),
                float(rng.uniform(grid.lon_min, grid.lon_max))) for _ in range(n)]
        mothers = place_mothers(grid, pts, horizon=1, windows=[(1, 1)] * n)
        table = chain_table(rng, n)
        initial = cheapest_insertion(1, center, depot, mothers, TT, table, capacity=3)
        improved = guided_local_search(initial, mothers, TT, table, capacity=3,
                                       config=GlsConfig(time_limit_s=None, max_iterations=25))
        assert improved.utility >= initial.utility - 1e-12
        ok, _ = route_feasible(improved, TT, capacity=3)
        assert ok


def test_pool_disjoint_centers():
    grid = tiny_grid(n_cols=3)
    west = grid.cell_center(0)
    east = grid.cell_center(2)
    mothers = place_mothers(grid, [west, west, east, east], horizon=1, windows=[(1, 1)] * 4)
    table = chain_table(np.random.default_rng(2), 4)
    depots = [Depot(0, *west)]
    centers = [VaccinationCenter(0, west[0], west[1], 480, 1020, 0),
               VaccinationCenter(1, east[0], east[1], 480, 1020, 0)]
    inst = make_instance(mothers, table, grid=grid, horizon=1, centers=centers,
                         depots=depots, buses=2, bus_capacity=2)
    cfg = RoutePoolConfig(center_radius_km=0.6,
                          gls=GlsConfig(time_limit_s=None, max_iterations=10))
    pool = generate_route_pool(inst, table, None, cfg)
    assert len(pool.plans) == 2
    picked = [set(p.picked) for p in pool.plans]
    assert picked[0] & picked[1] == set()
    assert picked[0] | picked[1] <= {0, 1, 2, 3}


def test_pool_respects_eligibility_day():
    grid = tiny_grid()
    mothers = place_mothers(grid, [grid.cell_center(0)], horizon=3, windows=[(3, 3)])
    table = ProbabilityTable({0: (0.1, 0.2, 0.3, 0.9, 1.0)})
    inst = make_instance(mothers, table, grid=grid, horizon=3)
    pool = generate_route_pool(inst, table, None, TEST_POOL_CONFIG)
    for plan in pool.plans:
        if plan.day < 3:
            assert 0 not in plan.picked
    assert any(0 in p.picked for p in pool.plans if p.day == 3)


def test_pool_size_thirty_days_thirty_two_centers():
    grid = tiny_grid(n_cols=3)
    rng = np.random.default_rng(0)
    pts = [(float(rng.uniform(grid.lat_min, grid.lat_max)),
            float(rng.uniform(grid.lon_min, grid.lon_max))) for _ in range(6)]
    mothers = place_mothers(grid, pts, horizon=30, windows=[(1, 30)] * 6)
    table = chain_table(rng, 6)
    depots = [Depot(i, grid.lat_min + 0.001 * i, grid.lon_min) for i in range(4)]
    centers = [VaccinationCenter(i, float(rng.uniform(grid.lat_min, grid.lat_max)),
                                 float(rng.uniform(grid.lon_min, grid.lon_max)),
                                 420, 1080, depots[i % 4].id) for i in range(32)]
    inst = make_instance(mothers, table, grid=grid, horizon=30, centers=centers,
                         depots=depots, buses=4)
    cfg = RoutePoolConfig(max_candidates=2,
                          gls=GlsConfig(time_limit_s=None, max_iterations=0))
    pool = generate_route_pool(inst, table, None, cfg)
    assert len(pool.plans) == 30 * 32 == 960


def test_membership_oracle_consistency():
    inst, pool = random_tiny_instance(404)
    fleet = inst.fleet
    for plan in pool.plans:
        for bus in pool.buses_for(fleet, plan):
            for m in plan.picked:
                assert pool.membership(m, plan.day, bus, plan.route_id, fleet)
            absent = [m.id for m in inst.mothers if m.id not in plan.picked]
            for m in absent:
                assert not pool.membership(m, plan.day, bus, plan.route_id, fleet)


def test_pool_deterministic():
    a = generate_route_pool(*_pool_inputs())
    b = generate_route_pool(*_pool_inputs())
    assert [(p.route_id, p.picked, p.utility) for p in a.plans] == \
           [(p.route_id, p.picked, p.utility) for p in b.plans]


def _pool_inputs():
    grid = tiny_grid(n_cols=3)
    rng = np.random.default_rng(9)
    pts = [(float(rng.uniform(grid.lat_min, grid.lat_max)),
            float(rng.uniform(grid.lon_min, grid.lon_max))) for _ in range(8)]
    mothers = place_mothers(grid, pts, horizon=2, windows=[(1, 2)] * 8)
    table = chain_table(rng, 8)
    inst = make_instance(mothers, table, grid=grid, horizon=2, bus_capacity=4)
    return inst, table, None, TEST_POOL_CONFIG


def test_all_pool_plans_feasible_fuzz():
    total = 0
    for seed in range(40):
        inst, pool = random_tiny_instance(seed)
        tt = make_travel_time(TEST_POOL_CONFIG.speed_kmh)
        for plan in pool.plans:
            if plan.feasible:
                ok, why = route_feasible(plan, tt, inst.fleet.capacity)
                assert ok, why
                total += 1
    assert total > 20
