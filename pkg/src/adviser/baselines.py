"""Comparison allocators: the rule-based field playbook and a
cluster-then-solve hierarchical planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import (
    Allocation,
    Assignment,
    InputError,
    Instance,
    Kind,
    ProbabilityTable,
    finalize_allocation,
)
from .geo import haversine_km, point_segment_km, project_km
from .ilp import BuildConfig, SolveConfig, build_model, extract_allocation, solve
from .routing import (
    DAY_MINUTES,
    RoutePlan,
    RoutePoolConfig,
    RoutingNode,
    _plan_with_nodes,
    generate_route_pool,
    make_travel_time,
)

# ---------------------------------------------------------------------------
# rule-based baseline


@dataclass(frozen=True)
class RwbConfig:
    neighbourhood_cells: tuple[int, ...] | None = None  # default: most-populous cells
    n_neighbourhoods: int = 33
    walking_radius_km: float = 1.0
    voucher_distance_km: float = 10.0
    speed_kmh: float = 25.0


def _most_populous_cells(instance: Instance, n: int) -> tuple[int, ...]:
    counts: dict[int, int] = {}
    for m in instance.mothers:
        counts[m.cell] = counts.get(m.cell, 0) + 1
    ranked = sorted(counts, key=lambda g: (-counts[g], g))
    return tuple(ranked[:n])


def rwb_allocate(instance: Instance, table: ProbabilityTable,
                 config: RwbConfig = RwbConfig()) -> Allocation:
    """Four fixed stages sharing one budget pool: neighbourhood drives on
    alternate days, round-robin bus routes, distance-triggered vouchers
    (poorest first), then phone calls (youngest child first)."""
    costs = instance.costs
    budget = instance.budget
    cells = config.neighbourhood_cells
    if cells is None:
        cells = _most_populous_cells(instance, config.n_neighbourhoods)
    for g in cells:
        if not 0 <= g < instance.grid.n_cells:
            raise InputError(f"neighbourhood cell {g} outside grid")

    assignments: dict[int, Assignment] = {m.id: Assignment(Kind.NONE) for m in instance.mothers}
    drives: dict[tuple[int, int], tuple[int, ...]] = {}
    routes: dict[tuple[int, int, int], tuple[int, ...]] = {}
    route_details: dict = {}
    unassigned = {m.id for m in instance.mothers}

    # stage 1: drives at the fixed neighbourhood cells on odd days
    for day in range(1, instance.horizon + 1, 2):
        for g in cells:
            if budget < costs.drive:
                break
            if instance.drive_cap is not None and len(drives) >= instance.drive_cap:
                break
            members = [m for m in instance.mothers
                       if m.id in unassigned
                       and m.elig_start <= day <= m.elig_end
                       and instance.distance_km(m.id, g) <= instance.drive_radius_km + 1e-12]
            if not members:
                continue
            members.sort(key=lambda m: (instance.distance_km(m.id, g), m.id))
            chosen = members[:instance.drive_capacity]
            drives[(g, day)] = tuple(sorted(m.id for m in chosen))
            for m in chosen:
                assignments[m.id] = Assignment(Kind.VACCINE_DRIVE, day=day, cell=g)
                unassigned.discard(m.id)
            budget -= costs.drive

    # stage 2: every bus serves one center per day, round-robin; mothers
    # within walking distance of the depot-center line can flag it down
    travel_time = make_travel_time(config.speed_kmh)
    depot_by_id = {d.id: d for d in instance.depots}
    rwb_route_id = 0
    if instance.centers:
        for day in range(1, instance.horizon + 1):
            for f_idx, bus in enumerate(instance.fleet.buses):
                if budget < costs.route:
                    break
                center = instance.centers[(day - 1 + f_idx) % len(instance.centers)]
                depot = depot_by_id[bus.depot_id]
                seg_a, seg_b = (depot.lat, depot.lon), (center.lat, center.lon)
                cands = [m for m in instance.mothers
                         if m.id in unassigned
                         and m.elig_start <= day <= m.elig_end
                         and point_segment_km((m.lat, m.lon), seg_a, seg_b) <= config.walking_radius_km]
                if not cands:
                    continue
                plan = _fixed_route_plan(day, bus.id, depot, center, cands, travel_time,
                                         table, instance.fleet.capacity, rwb_route_id)
                if plan is None or not plan.picked:
                    continue
                key = (day, bus.id, plan.route_id)
                routes[key] = tuple(sorted(plan.picked))
                route_details[key] = plan
                for mid in plan.picked:
                    assignments[mid] = Assignment(Kind.BUS_PICKUP, day=day, bus=bus.id,
                                                  route_id=plan.route_id)
                    unassigned.discard(mid)
                budget -= costs.route
                rwb_route_id += 1

    # stage 3: vouchers for mothers far from every center, poorest first
    if instance.centers:
        far = []
        for m in instance.mothers:
            if m.id not in unassigned:
                continue
            nearest = min(haversine_km(m.lat, m.lon, c.lat, c.lon) for c in instance.centers)
            if nearest > config.voucher_distance_km:
                far.append(m)
        far.sort(key=lambda m: (m.features.income_level, m.id))
        for m in far:
            if budget < costs.voucher:
                break
            assignments[m.id] = Assignment(Kind.TRAVEL_VOUCHER, day=m.elig_start)
            unassigned.discard(m.id)
            budget -= costs.voucher

    # stage 4: phone calls, youngest child first
    rest = sorted((m for m in instance.mothers if m.id in unassigned),
                  key=lambda m: (m.features.child_age_months, m.id))
    for m in rest:
        if budget < costs.call:
            break
        assignments[m.id] = Assignment(Kind.PHONE_CALL, day=m.elig_start)
        unassigned.discard(m.id)
        budget -= costs.call

    alloc = Allocation(assignments=assignments, drives=drives, routes=routes,
                       route_details=route_details)
    return finalize_allocation(instance, alloc)


def _fixed_route_plan(day, bus_id, depot, center, candidates, travel_time, table,
                      capacity, route_id) -> RoutePlan | None:
    """Pickups in order of progress along the depot-center line, keeping
    each one only if the schedule still fits every window."""
    seg_a = (depot.lat, depot.lon)

    def progress(m):
        x, y = project_km(m.lat, m.lon, seg_a[0], seg_a[1])
        bx, by = project_km(center.lat, center.lon, seg_a[0], seg_a[1])
        denom = bx * bx + by * by
        return 0.0 if denom <= 0 else (x * bx + y * by) / denom

    ordered = sorted(candidates, key=lambda m: (progress(m), m.id))
    depot_node = RoutingNode("depot", depot.id, depot.lat, depot.lon, 0.0, DAY_MINUTES)
    center_node = RoutingNode("dropoff", center.id, center.lat, center.lon,
                              center.dropoff_earliest, center.dropoff_latest)
    base = RoutePlan(route_id=route_id, day=day, center=center.id, depot=depot.id,
                     nodes=(depot_node, center_node), arrivals=(), picked=(), utility=0.0,
                     bus=bus_id)
    plan = _plan_with_nodes(base, (depot_node, center_node), travel_time, table)
    if not plan.feasible:
        return None
    nodes = [depot_node, center_node]
    for m in ordered:
        if len(nodes) - 2 >= capacity:
            break
        pn = RoutingNode("pickup", m.id, m.lat, m.lon, m.pickup_earliest, m.pickup_latest)
        trial = nodes[:-1] + [pn, nodes[-1]]
        cand = _plan_with_nodes(plan, tuple(trial), travel_time, table)
        if cand.feasible:
            nodes = trial
            plan = cand
    return plan


# ---------------------------------------------------------------------------
# k-means and the elbow rule


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, 2) lat/lon
    assignment: np.ndarray  # mother index -> cluster
    inertia: float
    inertia_trace: list[float] = field(default_factory=list)


def kmeans(points: np.ndarray, k: int, seed: int, max_iterations: int = 100) -> ClusterModel:
    """Lloyd's iterations from centroids sampled uniformly among the
    points; distances on a local km projection so degrees of longitude
    don't get overweighted."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    if k > n:
        raise InputError(f"k={k} exceeds number of points {n}")
    lat0, lon0 = float(points[:, 0].mean()), float(points[:, 1].mean())
    xy = np.column_stack([
        (points[:, 1] - lon0) * 111.320 * math.cos(math.radians(lat0)),
        (points[:, 0] - lat0) * 110.574,
    ])

    rng = np.random.default_rng(seed)
    centroids = xy[rng.choice(n, size=k, replace=False)]
    assign = np.zeros(n, dtype=int)
    trace: list[float] = []
    for _ in range(max_iterations):
        d2 = ((xy[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), new_assign].sum())
        trace.append(inertia)
        moved = not np.array_equal(new_assign, assign) or len(trace) == 1
        assign = new_assign
        for c in range(k):
            members = xy[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        if not moved:
            break
    d2 = ((xy[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), assign].sum())
    trace.append(inertia)

    lat = points[:, 0]
    lon = points[:, 1]
    cent_geo = np.zeros((k, 2))
    for c in range(k):
        members = assign == c
        if members.any():
            cent_geo[c] = (lat[members].mean(), lon[members].mean())
        else:
            cent_geo[c] = (lat0 + centroids[c, 1] / 110.574,
                           lon0 + centroids[c, 0] / (111.320 * math.cos(math.radians(lat0))))
    return ClusterModel(k=k, centroids=cent_geo, assignment=assign, inertia=inertia,
                        inertia_trace=trace)


@dataclass(frozen=True)
class ElbowResult:
    k: int
    no_knee: bool
    inertias: tuple[float, ...]


def elbow_select(points: np.ndarray, k_range: range, seed: int) -> ElbowResult:
    """The k whose (k, inertia) point sits farthest below the chord
    between the curve's endpoints; a flat or linear curve has no knee and
    falls back to the range midpoint."""
    ks = list(k_range)
    if not ks:
        raise InputError("empty k range")
    inertias = [kmeans(points, k, seed).inertia for k in ks]
    if len(ks) < 3:
        return ElbowResult(ks[0], True, tuple(inertias))
    x = np.array(ks, dtype=float)
    y = np.array(inertias, dtype=float)
    x_n = (x - x[0]) / max(x[-1] - x[0], 1e-12)
    span = max(y[0] - y[-1], 1e-12)
    y_n = (y - y[-1]) / span
    chord = 1.0 - x_n  # normalized line from (0,1) to (1,0)
    dist = chord - y_n
    best = int(np.argmax(dist))
    if dist[best] < 1e-6:
        return ElbowResult(ks[len(ks) // 2], True, tuple(inertias))
    return ElbowResult(ks[best], False, tuple(inertias))


# ---------------------------------------------------------------------------
# hierarchical planner


@dataclass(frozen=True)
class HilpConfig:
    k_range: tuple[int, int] = (2, 12)  # inclusive
    seed: int = 0
    k_override: int | None = None
    pool: RoutePoolConfig = RoutePoolConfig()
    build: BuildConfig = BuildConfig()
    solve: SolveConfig = SolveConfig()


def hilp_allocate(instance: Instance, table: ProbabilityTable,
                  config: HilpConfig = HilpConfig()) -> Allocation:
    """Cluster mothers geographically, split the budget proportionally,
    and solve one integer program per cluster (largest first, consuming
    shared bus-days and drive slots as it goes)."""
    points = np.array([[m.lat, m.lon] for m in instance.mothers])
    if config.k_override is not None:
        k = config.k_override
    else:
        hi = min(config.k_range[1], len(points))
        lo = min(config.k_range[0], hi)
        k = elbow_select(points, range(lo, hi + 1), config.seed).k
    model = kmeans(points, k, config.seed)

    clusters: list[list[int]] = [[] for _ in range(k)]
    for i, m in enumerate(instance.mothers):
        clusters[model.assignment[i]].append(m.id)

    budgets = _proportional_split(instance.budget, [len(c) for c in clusters])
    caps = (_proportional_split(instance.drive_cap, [len(c) for c in clusters])
            if instance.drive_cap is not None else [None] * k)

    order = sorted(range(k), key=lambda c: (-len(clusters[c]), c))
    merged_assignments: dict[int, Assignment] = {m.id: Assignment(Kind.NONE) for m in instance.mothers}
    merged_drives: dict = {}
    merged_routes: dict = {}
    merged_details: dict = {}
    used_bus_days: set[tuple[int, int]] = set()
    used_cell_days: set[tuple[int, int]] = set()

    for c in order:
        ids = clusters[c]
        if not ids:
            continue
        sub = _restrict_instance(instance, ids, budgets[c], caps[c])
        sub_table = ProbabilityTable({m: table.row(m) for m in ids})
        pool = generate_route_pool(sub, sub_table, None, config.pool)
        build = replace(config.build,
                        blocked_bus_days=frozenset(used_bus_days),
                        blocked_cell_days=frozenset(used_cell_days))
        ilp_model = build_model(sub, sub_table, pool, None, sub.budget, build)
        sol = solve(ilp_model, config.solve)
        alloc = extract_allocation(sub, ilp_model, sol, pool, None)
        for mid, a in alloc.assignments.items():
            if a.kind is not Kind.NONE:
                merged_assignments[mid] = a
        for key, members in alloc.drives.items():
            merged_drives[key] = members
            used_cell_days.add(key)
        for key, members in alloc.routes.items():
            merged_routes[key] = members
            if key in alloc.route_details:
                merged_details[key] = alloc.route_details[key]
            used_bus_days.add((key[0], key[1]))

    out = Allocation(assignments=merged_assignments, drives=merged_drives,
                     routes=merged_routes, route_details=merged_details)
    return finalize_allocation(instance, out)


def _proportional_split(total: int, sizes: list[int]) -> list[int]:
    n = sum(sizes)
    if n == 0:
        return [0] * len(sizes)
    shares = [total * s // n for s in sizes]
    residual = total - sum(shares)
    order = sorted(range(len(sizes)), key=lambda i: (-sizes[i], i))
    for i in range(int(residual)):
        shares[order[i % len(order)]] += 1
    return shares


def _restrict_instance(instance: Instance, ids: list[int], budget, cap) -> Instance:
    keep = set(ids)
    return Instance(
        mothers=[m for m in instance.mothers if m.id in keep],
        grid=instance.grid,
        centers=instance.centers,
        depots=instance.depots,
        fleet=instance.fleet,
        horizon=instance.horizon,
        budget=budget,
        costs=instance.costs,
        drive_radius_km=instance.drive_radius_km,
        drive_capacity=instance.drive_capacity,
        probabilities=ProbabilityTable({m: instance.probabilities.row(m) for m in ids}),
        drive_cap=cap,
    )
