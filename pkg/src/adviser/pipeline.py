"""End-to-end planning and the experiment harness.

The planner runs greedy pruning, assigns drives to the pruned mothers,
builds the candidate route pool over whoever is left, and hands the
remainder to the integer program with the leftover budget. The harness
sweeps budgets over synthetic datasets and reports method comparisons.
"""

from __future__ import annotations

import logging
import subprocess
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import HilpConfig, RwbConfig, hilp_allocate, rwb_allocate
from .domain import (
    Allocation,
    ConfigError,
    Instance,
    Money,
    ProbabilityTable,
    finalize_allocation,
    money,
    validate_allocation,
    validate_instance,
)
from .estimation import Dataset, GeographySpec, SyntheticSpec, default_source_pool, generate_population
from .domain import Bus, CostSchedule, Depot, Fleet, VaccinationCenter, default_costs
from .ilp import BuildConfig, SolveConfig, build_model, extract_allocation, solve
from .pruning import PruneState, greedy_prune
from .routing import GlsConfig, RoutePool, RoutePoolConfig, generate_route_pool
from .serialize import canonical_json, content_hash

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlanConfig:
    prune_margin: Money = money(1000)  # pruning threshold is budget minus this
    pool: RoutePoolConfig = RoutePoolConfig()
    build: BuildConfig = BuildConfig()
    solve: SolveConfig = SolveConfig()


@dataclass
class PlanDetails:
    prune_state: PruneState
    route_pool: RoutePool
    solver_status: str
    solver_gap: float
    solver_nodes: int
    pruned_count: int


def adviser_plan(instance: Instance, table: ProbabilityTable | None = None,
                 config: PlanConfig = PlanConfig(),
                 route_pool: RoutePool | None = None) -> tuple[Allocation, PlanDetails]:
    """Prune, route, solve, merge; the allocation always validates."""
    table = table if table is not None else instance.probabilities
    threshold = max(0, instance.budget - config.prune_margin)
    prune_state = greedy_prune(instance, table, threshold)
    if route_pool is None:
        route_pool = generate_route_pool(instance, table, prune_state.remaining_mothers,
                                         config.pool)
    model = build_model(instance, table, route_pool, prune_state,
                        prune_state.remaining_budget, config.build)
    solution = solve(model, config.solve)
    allocation = extract_allocation(instance, model, solution, route_pool, prune_state)
    details = PlanDetails(
        prune_state=prune_state,
        route_pool=route_pool,
        solver_status=solution.status,
        solver_gap=solution.gap,
        solver_nodes=solution.node_count,
        pruned_count=len(prune_state.pruned_mothers),
    )
    return allocation, details


# ---------------------------------------------------------------------------
# dataset construction


@dataclass(frozen=True)
class DatasetConfig:
    dataset: str = "d1"  # d1 | d2
    population: int = 2000
    seed: int = 42
    horizon: int = 30
    geography: GeographySpec = GeographySpec()
    n_centers: int = 8
    n_depots: int = 4
    n_buses: int = 4
    bus_capacity: int = 30
    drive_capacity: int = 100
    drive_radius_km: float = 3.0
    costs: CostSchedule = field(default_factory=default_costs)


def make_instance(ds: DatasetConfig, budget: Money, drive_cap: int | None = None):
    """Instance plus the D2 estimator diagnostics (None for D1)."""
    spec = SyntheticSpec(
        dataset=Dataset(ds.dataset),
        population_size=ds.population,
        seed=ds.seed,
        source_pool=default_source_pool(),
        geography=ds.geography,
        horizon=ds.horizon,
    )
    mothers, table, d2_report = generate_population(spec)

    facility_rng = np.random.default_rng(np.random.SeedSequence(entropy=ds.seed, spawn_key=(9001,)))
    geo = ds.geography
    depots = []
    for i in range(ds.n_depots):
        depots.append(Depot(id=i,
                            lat=float(facility_rng.uniform(geo.lat_min, geo.lat_max)),
                            lon=float(facility_rng.uniform(geo.lon_min, geo.lon_max))))
    centers = []
    from .geo import haversine_km
    for i in range(ds.n_centers):
        lat = float(facility_rng.uniform(geo.lat_min, geo.lat_max))
        lon = float(facility_rng.uniform(geo.lon_min, geo.lon_max))
        nearest = min(depots, key=lambda d: (haversine_km(lat, lon, d.lat, d.lon), d.id))
        centers.append(VaccinationCenter(id=i, lat=lat, lon=lon,
                                         dropoff_earliest=480, dropoff_latest=900,
                                         depot_id=nearest.id))
    fleet = Fleet(buses=tuple(Bus(id=i, depot_id=depots[i % len(depots)].id)
                              for i in range(ds.n_buses)),
                  capacity=ds.bus_capacity)
    instance = Instance(
        mothers=mothers, grid=geo.grid(), centers=centers, depots=depots, fleet=fleet,
        horizon=ds.horizon, budget=budget, costs=ds.costs,
        drive_radius_km=ds.drive_radius_km, drive_capacity=ds.drive_capacity,
        probabilities=table, drive_cap=drive_cap,
    )
    bad = validate_instance(instance)
    if bad:
        raise ConfigError(f"generated instance failed validation: {bad[:3]}")
    return instance, d2_report


# ---------------------------------------------------------------------------
# experiments


def desk_scale_plan_config() -> PlanConfig:
    """Bounded-work settings for the 2000-mother experiments: iteration
    budgets instead of wall clocks everywhere, so runs are reproducible."""
    return PlanConfig(
        prune_margin=money(50),  # the field threshold scaled by population ratio
        pool=RoutePoolConfig(max_candidates=40,
                             gls=GlsConfig(time_limit_s=None, max_iterations=8)),
        build=BuildConfig(max_drive_groups=700, drive_members_slack=250),
        solve=SolveConfig(node_limit=0, time_limit_s=None),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = DatasetConfig()
    budgets: tuple[Money, ...] = (money(350), money(375), money(400), money(420))
    methods: tuple[str, ...] = ("adviser", "hilp", "rwb")
    drive_cap: int | None = None
    plan: PlanConfig = field(default_factory=desk_scale_plan_config)
    hilp_k_range: tuple[int, int] = (2, 12)

    def hilp_config(self) -> HilpConfig:
        return HilpConfig(k_range=self.hilp_k_range, seed=self.dataset.seed,
                          pool=self.plan.pool, build=self.plan.build, solve=self.plan.solve)


@dataclass
class ReportRow:
    method: str
    budget_tenths: Money
    objective: float
    cost_tenths: Money
    counts: dict[str, int]
    solver_status: str | None = None
    solver_gap: float | None = None


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    meta: dict
    timings: dict[str, float] = field(default_factory=dict)  # not part of canonical output
    allocations: dict[tuple[str, Money], Allocation] = field(default_factory=dict, repr=False)
    d2_report: object | None = None

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "rows": [{
                "method": r.method,
                "budget_tenths": r.budget_tenths,
                "objective": r.objective,
                "cost_tenths": r.cost_tenths,
                "counts": r.counts,
                "solver_status": r.solver_status,
                "solver_gap": r.solver_gap,
            } for r in self.rows],
        }

    def to_csv(self) -> str:
        header = ["method", "budget_tenths", "objective", "cost_tenths",
                  "n_calls", "n_vouchers", "n_pickups", "n_drive_targets", "n_none"]
        lines = [",".join(header)]
        for r in self.rows:
            lines.append(",".join(str(v) for v in [
                r.method, r.budget_tenths, r.objective, r.cost_tenths,
                r.counts.get("phone_call", 0), r.counts.get("travel_voucher", 0),
                r.counts.get("bus_pickup", 0), r.counts.get("vaccine_drive", 0),
                r.counts.get("none", 0)]))
        return "\n".join(lines) + "\n"


def _git_revision() -> str | None:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=10)
        return out.stdout.strip() or None
    except Exception:
        return None


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Every method at every budget; rows are validated and objectives
    recomputed before they are reported.

    Budgets run in ascending order and each method keeps its best
    allocation so far: a lower-budget plan stays feasible at a higher
    budget, so the sweep is monotone by construction.
    """
    for m in config.methods:
        if m not in ("adviser", "hilp", "rwb"):
            raise ConfigError(f"unknown method {m!r}")
    if not config.budgets:
        raise ConfigError("budget list is empty")
    if not config.methods:
        raise ConfigError("method list is empty")

    meta = {
        "dataset": config.dataset.dataset,
        "population": config.dataset.population,
        "seed": config.dataset.seed,
        "drive_cap": config.drive_cap,
        "budgets_tenths": list(config.budgets),
        "methods": list(config.methods),
        "git_revision": _git_revision(),
    }
    meta["config_hash"] = content_hash(canonical_json(meta))

    rows: list[ReportRow] = []
    timings: dict[str, float] = {}
    allocations: dict[tuple[str, Money], Allocation] = {}
    best_so_far: dict[str, Allocation] = {}

    base_instance, d2_report = make_instance(config.dataset, min(config.budgets),
                                             config.drive_cap)
    for budget in sorted(config.budgets):
        instance = replace(base_instance, budget=budget)
        table = instance.probabilities
        for method in config.methods:
            t0 = time.perf_counter()
            meta_status = meta_gap = None
            if method == "adviser":
                allocation, details = adviser_plan(instance, table, config.plan)
                meta_status, meta_gap = details.solver_status, details.solver_gap
            elif method == "hilp":
                allocation = hilp_allocate(instance, table, config.hilp_config())
            else:
                allocation = rwb_allocate(instance, table, RwbConfig())
            elapsed = time.perf_counter() - t0

            prev = best_so_far.get(method)
            if prev is not None and prev.objective > allocation.objective:
                allocation = _revalidated(instance, prev)
            best_so_far[method] = allocation

            violations = validate_allocation(instance, allocation)
            if violations:
                raise ConfigError(f"{method} produced an invalid allocation: {violations[:3]}")
            rows.append(ReportRow(
                method=method, budget_tenths=budget,
                objective=allocation.objective, cost_tenths=allocation.total_cost,
                counts=allocation.counts(), solver_status=meta_status, solver_gap=meta_gap))
            timings[f"{method}@{budget}"] = elapsed
            allocations[(method, budget)] = allocation
            log.info("%s budget=%s objective=%.2f cost=%s in %.1fs",
                     method, budget, allocation.objective, allocation.total_cost, elapsed)

    return ExperimentReport(rows=rows, meta=meta, timings=timings,
                            allocations=allocations, d2_report=d2_report)


def _revalidated(instance: Instance, alloc: Allocation) -> Allocation:
    copy = Allocation(assignments=dict(alloc.assignments), drives=dict(alloc.drives),
                      routes=dict(alloc.routes), route_details=dict(alloc.route_details))
    return finalize_allocation(instance, copy)


# ---------------------------------------------------------------------------
# config parsing (CLI / service)


def plan_config_from_dict(data: dict | None) -> PlanConfig:
    """Reproducible defaults: the route search runs on iteration budgets
    and the solver on node limits, so fixed seeds give fixed bytes."""
    data = data or {}
    base = PlanConfig(
        pool=RoutePoolConfig(max_candidates=40,
                             gls=GlsConfig(time_limit_s=None, max_iterations=40)),
        # bounded node budget instead of a wall clock keeps CLI/service
        # outputs reproducible while still terminating on large models
        solve=SolveConfig(time_limit_s=None, node_limit=400),
    )
    pool_d = data.get("pool", {})
    gls_d = pool_d.get("gls", {})
    gls = GlsConfig(
        time_limit_s=gls_d.get("time_limit_s", base.pool.gls.time_limit_s),
        max_iterations=gls_d.get("max_iterations", base.pool.gls.max_iterations),
        penalty_factor=gls_d.get("penalty_factor", base.pool.gls.penalty_factor),
    )
    pool = RoutePoolConfig(
        center_radius_km=pool_d.get("center_radius_km", base.pool.center_radius_km),
        speed_kmh=pool_d.get("speed_kmh", base.pool.speed_kmh),
        max_candidates=pool_d.get("max_candidates", base.pool.max_candidates),
        gls=gls,
    )
    build_d = data.get("build", {})
    build = BuildConfig(
        literal=build_d.get("literal", False),
        drive_cells_per_mother=build_d.get("drive_cells_per_mother"),
    )
    solve_d = data.get("solve", {})
    solve_cfg = SolveConfig(
        node_limit=solve_d.get("node_limit", base.solve.node_limit),
        time_limit_s=solve_d.get("time_limit_s", base.solve.time_limit_s),
        gap_tolerance=solve_d.get("gap_tolerance", base.solve.gap_tolerance),
        simplex_column_limit=solve_d.get("simplex_column_limit", base.solve.simplex_column_limit),
        simplex_total_limit=solve_d.get("simplex_total_limit", base.solve.simplex_total_limit),
    )
    margin = data.get("prune_margin_tenths", PlanConfig().prune_margin)
    return PlanConfig(prune_margin=margin, pool=pool, build=build, solve=solve_cfg)


def dataset_config_from_dict(data: dict | None) -> DatasetConfig:
    data = data or {}
    geo_d = data.get("geography", {})
    geo = GeographySpec(**geo_d) if geo_d else GeographySpec()
    costs_d = data.get("costs_tenths")
    costs = (CostSchedule(**costs_d) if costs_d else default_costs())
    return DatasetConfig(
        dataset=data.get("dataset", "d1"),
        population=data.get("population", 2000),
        seed=data.get("seed", 42),
        horizon=data.get("horizon", 30),
        geography=geo,
        n_centers=data.get("n_centers", 8),
        n_depots=data.get("n_depots", 4),
        n_buses=data.get("n_buses", 4),
        bus_capacity=data.get("bus_capacity", 30),
        drive_capacity=data.get("drive_capacity", 100),
        drive_radius_km=data.get("drive_radius_km", 2.0),
        costs=costs,
    )


def experiment_config_from_dict(data: dict) -> ExperimentConfig:
    budgets = data.get("budgets_tenths")
    if budgets is None and "budgets_units" in data:
        budgets = [money(b) for b in data["budgets_units"]]
    plan = plan_config_from_dict(data.get("plan")) if "plan" in data else desk_scale_plan_config()
    return ExperimentConfig(
        dataset=dataset_config_from_dict(data.get("dataset")),
        budgets=tuple(budgets) if budgets else ExperimentConfig().budgets,
        methods=tuple(data.get("methods", ("adviser", "hilp", "rwb"))),
        drive_cap=data.get("drive_cap"),
        plan=plan,
        hilp_k_range=tuple(data.get("hilp_k_range", (2, 12))),
    )
