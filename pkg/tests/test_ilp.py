import numpy as np
import pytest

from adviser.bounds import brute_force_optimum
from adviser.domain import Kind, ProbabilityTable, money, validate_allocation
from adviser.ilp import BuildConfig, SolveConfig, build_model, extract_allocation, solve
from adviser.pruning import greedy_prune
from adviser.routing import RoutePool

from conftest import (
    CHEAP_DRIVE_COSTS,
    PAPER_COSTS,
    chain_table,
    make_instance,
    place_mothers,
    random_tiny_instance,
    tiny_grid,
)

EXACT = SolveConfig(time_limit_s=None)


def two_mother_one_cell_instance():
    grid = tiny_grid(n_cols=1)
    lat, lon = grid.cell_center(0)
    mothers = place_mothers(grid, [(lat, lon)] * 2, horizon=1, windows=[(1, 1)] * 2)
    table = ProbabilityTable({0: (0.1, 0.3, 0.5, 0.7, 1.0),
                              1: (0.2, 0.4, 0.6, 0.8, 1.0)})
    return make_instance(mothers, table, grid=grid, horizon=1, budget=money(10),
                         costs=CHEAP_DRIVE_COSTS, drive_capacity=2)


def test_literal_model_matches_hand_count():
    inst = two_mother_one_cell_instance()
    model = build_model(inst, inst.probabilities, RoutePool([]), None, inst.budget,
                        BuildConfig(literal=True))
    kinds = [c.kind for c in model.columns]
    assert kinds.count("yn") == 2 and kinds.count("yc") == 2 and kinds.count("yt") == 2
    assert kinds.count("x") == 1
    assert kinds.count("z") == 2
    assert model.n_columns == 6 + 1 + 2
    # rows: 6 y-eligibility + per-z (eligibility, link, radius) * 2
    #       + 1 drive capacity + 2 per-mother + 1 budget
    assert model.n_rows == 6 + 6 + 1 + 2 + 1


def test_budget_row_uses_cost_schedule_coefficients():
    inst = two_mother_one_cell_instance()
    model = build_model(inst, inst.probabilities, RoutePool([]), None, inst.budget)
    budget_row = next(r for r in model.rows if r.name == "budget")
    coef_by_kind = {}
    for j, coef in zip(budget_row.idx, budget_row.coef):
        coef_by_kind.setdefault(model.columns[j].kind, set()).add(float(coef))
    assert coef_by_kind["yc"] == {float(inst.costs.call)}
    assert coef_by_kind["yt"] == {float(inst.costs.voucher)}
    assert coef_by_kind["x"] == {float(inst.costs.drive)}
    assert budget_row.rhs == float(inst.budget)


def test_blocked_cell_fixes_drives_out():
    inst = two_mother_one_cell_instance()
    state = greedy_prune(inst, inst.probabilities, threshold=0)
    assert len(state.committed) == 1  # 2 mothers, drive 2.2 <= 2 vouchers
    model = build_model(inst, inst.probabilities, RoutePool([]), state,
                        state.remaining_budget)
    assert not any(c.kind == "x" for c in model.columns)


def test_zero_budget_yields_baseline_sum():
    inst = two_mother_one_cell_instance()
    model = build_model(inst, inst.probabilities, RoutePool([]), None, 0)
    sol = solve(model, EXACT)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(0.1 + 0.2)
    alloc = extract_allocation(inst, model, sol, RoutePool([]), None)
    assert alloc.counts()["none"] == 2
    assert alloc.total_cost == 0


def test_solution_replays_all_rows():
    for seed in (0, 1, 2):
        inst, pool = random_tiny_instance(seed)
        model = build_model(inst, inst.probabilities, pool, None, inst.budget)
        sol = solve(model, EXACT)
        assert model.check_assignment(sol.values.astype(float)) == []
        assert sol.bound >= sol.objective - 1e-9


def test_matches_brute_force_on_tiny_instances():
    for seed in range(12):
        inst, pool = random_tiny_instance(seed)
        model = build_model(inst, inst.probabilities, pool, None, inst.budget)
        sol = solve(model, EXACT)
        assert sol.status == "optimal", f"seed {seed}"
        alloc = extract_allocation(inst, model, sol, pool, None)
        assert validate_allocation(inst, alloc) == []
        _, best = brute_force_optimum(inst, inst.probabilities, pool)
        assert alloc.objective == pytest.approx(best, abs=1e-9), f"seed {seed}"


def test_reduced_equals_literal_on_tiny_instances():
    for seed in (3, 7, 11, 19):
        inst, pool = random_tiny_instance(seed, max_mothers=5)
        reduced = build_model(inst, inst.probabilities, pool, None, inst.budget)
        literal = build_model(inst, inst.probabilities, pool, None, inst.budget,
                              BuildConfig(literal=True))
        sol_r = solve(reduced, EXACT)
        sol_l = solve(literal, EXACT)
        assert sol_r.status == sol_l.status == "optimal"
        a_r = extract_allocation(inst, reduced, sol_r, pool, None)
        a_l = extract_allocation(inst, literal, sol_l, pool, None)
        assert a_r.objective == pytest.approx(a_l.objective, abs=1e-9), f"seed {seed}"


def test_budget_ladder_is_monotone():
    inst, pool = random_tiny_instance(23)
    prev = -1.0
    for budget in (0, money(2), money(4), money(8), money(12), money(20)):
        model = build_model(inst, inst.probabilities, pool, None, budget)
        sol = solve(model, EXACT)
        assert sol.status == "optimal"
        assert sol.objective >= prev - 1e-9
        prev = sol.objective


def test_solver_deterministic():
    inst, pool = random_tiny_instance(42)
    model = build_model(inst, inst.probabilities, pool, None, inst.budget)
    a = solve(model, EXACT)
    b = solve(model, EXACT)
    assert a.node_count == b.node_count
    assert a.objective == b.objective
    assert np.array_equal(a.values, b.values)


def test_extract_merges_pruned_drives():
    inst = two_mother_one_cell_instance()
    state = greedy_prune(inst, inst.probabilities, threshold=0)
    pool = RoutePool([])
    model = build_model(inst, inst.probabilities, pool, state, state.remaining_budget)
    sol = solve(model, EXACT)
    alloc = extract_allocation(inst, model, sol, pool, state)
    assert validate_allocation(inst, alloc) == []
    # pruned mothers carry the drive assignment and its full probability
    assert alloc.objective == pytest.approx(
        sol.objective + sum(inst.probabilities.prob(m, Kind.VACCINE_DRIVE)
                            for m in state.pruned_mothers))
    for m in state.pruned_mothers:
        assert alloc.assignments[m].kind is Kind.VACCINE_DRIVE


def test_drive_cap_row_present_and_enforced():
    grid = tiny_grid(n_cols=2)
    pts = [grid.cell_center(0)] * 2 + [grid.cell_center(1)] * 2
    mothers = place_mothers(grid, pts, horizon=1, windows=[(1, 1)] * 4)
    table = ProbabilityTable({i: (0.0, 0.1, 0.2, 0.3, 1.0) for i in range(4)})
    inst = make_instance(mothers, table, grid=grid, horizon=1, budget=money(30),
                         costs=CHEAP_DRIVE_COSTS, drive_capacity=2, radius=0.7,
                         drive_cap=1)
    model = build_model(inst, table, RoutePool([]), None, inst.budget)
    assert any(r.name == "drive-cap" for r in model.rows)
    sol = solve(model, EXACT)
    alloc = extract_allocation(inst, model, sol, RoutePool([]), None)
    assert len(alloc.drives) <= 1
    assert validate_allocation(inst, alloc) == []


def test_large_model_path_feasible_and_bounded():
    # force the structural-bound path by shrinking the simplex gate
    inst, pool = random_tiny_instance(5)
    model = build_model(inst, inst.probabilities, pool, None, inst.budget)
    cfg = SolveConfig(time_limit_s=None, node_limit=30, simplex_column_limit=0)
    sol = solve(model, cfg)
    assert sol.status in ("optimal", "feasible")
    assert model.check_assignment(sol.values.astype(float)) == []
    assert sol.bound >= sol.objective - 1e-9
    exact = solve(model, EXACT)
    assert sol.objective <= exact.objective + 1e-9
    assert sol.bound >= exact.objective - 1e-9


def test_drive_cells_per_mother_keeps_nearest_cells():
    grid = tiny_grid(n_cols=3)
    near = grid.cell_center(0)
    mothers = place_mothers(grid, [near], horizon=1, windows=[(1, 1)])
    table = ProbabilityTable({0: (0.1, 0.2, 0.3, 0.4, 1.0)})
    inst = make_instance(mothers, table, grid=grid, horizon=1, radius=5.0,
                         costs=CHEAP_DRIVE_COSTS)
    full = build_model(inst, table, RoutePool([]), None, inst.budget)
    capped = build_model(inst, table, RoutePool([]), None, inst.budget,
                         BuildConfig(drive_cells_per_mother=1))
    z_cells_full = {c.cell for c in full.columns if c.kind == "z"}
    z_cells_capped = {c.cell for c in capped.columns if c.kind == "z"}
    assert len(z_cells_full) == 3  # in range of every cell at radius 5
    assert z_cells_capped == {0}  # only her nearest cell survives the cap


def test_group_reduction_preserves_every_mothers_drive_option():
    inst, pool = random_tiny_instance(3)
    reduced = build_model(inst, inst.probabilities, pool, None, inst.budget,
                          BuildConfig(max_drive_groups=1, drive_members_slack=0))
    with_drive_full = {c.mother for c in build_model(
        inst, inst.probabilities, pool, None, inst.budget).columns if c.kind == "z"}
    with_drive_reduced = {c.mother for c in reduced.columns if c.kind == "z"}
    assert with_drive_reduced == with_drive_full  # coverage completion kicks in


def test_model_dump_is_parseable_text():
    inst = two_mother_one_cell_instance()
    model = build_model(inst, inst.probabilities, RoutePool([]), None, inst.budget)
    text = model.dump_lp()
    assert "maximize" in text and "subject to" in text and "binary" in text
    assert "budget" in text
