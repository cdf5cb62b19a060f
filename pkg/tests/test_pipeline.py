import numpy as np
import pytest

from adviser.baselines import HilpConfig, RwbConfig, hilp_allocate, rwb_allocate
from adviser.domain import ConfigError, Kind, money, validate_allocation
from adviser.ilp import SolveConfig
from adviser.pipeline import (
    DatasetConfig,
    ExperimentConfig,
    PlanConfig,
    adviser_plan,
    experiment_config_from_dict,
    make_instance,
    run_experiment,
)
from adviser.estimation import GeographySpec

from conftest import TEST_POOL_CONFIG, random_tiny_instance

EXACT_PLAN = PlanConfig(prune_margin=money(100), pool=TEST_POOL_CONFIG,
                        solve=SolveConfig(time_limit_s=None))

MINI_GEO = GeographySpec(lat_min=7.30, lat_max=7.33, lon_min=3.85, lon_max=3.88,
                         cell_size_km=1.2, n_blobs=3, blob_std_km=0.5)


def mini_dataset(dataset="d1", population=60, seed=7):
    return DatasetConfig(dataset=dataset, population=population, seed=seed,
                         horizon=6, geography=MINI_GEO, n_centers=2, n_depots=1,
                         n_buses=2, bus_capacity=5, drive_capacity=8,
                         drive_radius_km=1.5)


def mini_experiment(**kw):
    defaults = dict(
        dataset=mini_dataset(),
        budgets=(money(20), money(40), money(60)),
        methods=("adviser", "hilp", "rwb"),
        plan=PlanConfig(prune_margin=money(10), pool=TEST_POOL_CONFIG,
                        solve=SolveConfig(time_limit_s=None, node_limit=400)),
        hilp_k_range=(2, 4),
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


def test_adviser_plan_zero_budget_is_all_none():
    inst, pool = random_tiny_instance(6)
    inst.budget = 0
    alloc, details = adviser_plan(inst, None, EXACT_PLAN, route_pool=pool)
    assert all(a.kind is Kind.NONE for a in alloc.assignments.values())
    assert alloc.total_cost == 0


def test_adviser_plan_idempotent():
    inst, pool = random_tiny_instance(14)
    a, _ = adviser_plan(inst, None, EXACT_PLAN, route_pool=pool)
    b, _ = adviser_plan(inst, None, EXACT_PLAN, route_pool=pool)
    assert a.assignments == b.assignments
    assert a.drives == b.drives and a.routes == b.routes


def test_adviser_beats_baselines_on_tiny_instances():
    # field prices: the lazy rule can't overcommit on 8 mothers, so the
    # pipeline solves the whole problem exactly and dominates structurally
    wins = 0
    for seed in (4, 16, 28):
        inst, pool = random_tiny_instance(seed, costs_kind="paper")
        adviser, _ = adviser_plan(inst, None, EXACT_PLAN, route_pool=pool)
        hilp = hilp_allocate(inst, inst.probabilities,
                             HilpConfig(k_override=2, pool=TEST_POOL_CONFIG,
                                        solve=SolveConfig(time_limit_s=None)))
        rwb = rwb_allocate(inst, inst.probabilities, RwbConfig(n_neighbourhoods=3))
        assert adviser.objective >= hilp.objective - 1e-9
        assert adviser.objective >= rwb.objective - 1e-9
        wins += 1
    assert wins == 3


def test_make_instance_valid_and_deterministic():
    a, _ = make_instance(mini_dataset(), money(40))
    b, _ = make_instance(mini_dataset(), money(40))
    assert [m.id for m in a.mothers] == [m.id for m in b.mothers]
    assert a.probabilities.as_dict() == b.probabilities.as_dict()
    assert [(c.id, c.depot_id) for c in a.centers] == [(c.id, c.depot_id) for c in b.centers]


def test_make_instance_d2_reports_estimator_quality():
    inst, report = make_instance(mini_dataset(dataset="d2"), money(40))
    assert report is not None
    assert abs(report.holdout_error_baseline - report.bayes_error_baseline) <= 0.10


def test_run_experiment_row_grid_and_validity():
    report = run_experiment(mini_experiment())
    assert len(report.rows) == 9  # 3 methods x 3 budgets
    for row in report.rows:
        assert row.cost_tenths <= row.budget_tenths
        total = sum(row.counts.values())
        assert total == 60
    assert set(report.timings) == {f"{m}@{b}" for m in ("adviser", "hilp", "rwb")
                                   for b in (200, 400, 600)}


def test_run_experiment_objective_monotone_in_budget():
    report = run_experiment(mini_experiment())
    for method in ("adviser", "hilp", "rwb"):
        objs = [r.objective for r in report.rows if r.method == method]
        assert objs == sorted(objs)


def test_run_experiment_rejects_unknown_method():
    with pytest.raises(ConfigError):
        run_experiment(mini_experiment(methods=("adviser", "magic")))


def test_experiment_config_from_dict_roundtrip():
    cfg = experiment_config_from_dict({
        "dataset": {"dataset": "d1", "population": 50, "seed": 3},
        "budgets_units": [10, 20],
        "methods": ["adviser"],
        "plan": {"solve": {"node_limit": 50}},
    })
    assert cfg.budgets == (money(10), money(20))
    assert cfg.methods == ("adviser",)
    assert cfg.plan.solve.node_limit == 50
    assert cfg.dataset.population == 50
