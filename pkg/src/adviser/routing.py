"""Candidate route-pool generation.

One vehicle-routing solve per (day, vaccination center): a parallel
cheapest-insertion pass seeds the plan with the mothers whose pickup is
worth the most per minute of added travel, then guided local search
shuffles pickups in and out under arc penalties to escape local optima.
The pool keeps the best plan found per (day, center); the integer
program later decides which plans each bus operates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .domain import InputError, Instance, Kind, Mother, ProbabilityTable
from .geo import haversine_km

DAY_MINUTES = 24 * 60


@dataclass(frozen=True)
class RoutingNode:
    kind: str  # depot | pickup | dropoff
    ref_id: int
    lat: float
    lon: float
    earliest: float
    latest: float


@dataclass(frozen=True)
class RoutePlan:
    route_id: int
    day: int
    center: int
    depot: int
    nodes: tuple[RoutingNode, ...]
    arrivals: tuple[float, ...]
    picked: tuple[int, ...]
    utility: float
    feasible: bool = True
    bus: int | None = None


class RoutePool:
    """Best plan per (day, center) plus the pickup membership oracle."""

    def __init__(self, plans: list[RoutePlan]):
        self.plans = list(plans)
        self.by_id = {p.route_id: p for p in self.plans}
        self.by_day_center = {(p.day, p.center): p for p in self.plans}

    def buses_for(self, fleet, plan: RoutePlan) -> list[int]:
        return [b.id for b in fleet.buses if b.depot_id == plan.depot]

    def plans_for(self, fleet, day: int, bus_id: int) -> list[RoutePlan]:
        depot = next(b.depot_id for b in fleet.buses if b.id == bus_id)
        return [p for p in self.plans if p.day == day and p.depot == depot and p.feasible]

    def membership(self, mother_id: int, day: int, bus_id: int, route_id: int, fleet) -> bool:
        plan = self.by_id.get(route_id)
        if plan is None or plan.day != day:
            return False
        if bus_id not in self.buses_for(fleet, plan):
            return False
        return mother_id in plan.picked


def make_travel_time(speed_kmh: float = 25.0):
    """Minutes between two nodes at a constant speed over great circles."""

    def tt(a: RoutingNode, b: RoutingNode) -> float:
        return haversine_km(a.lat, a.lon, b.lat, b.lon) / speed_kmh * 60.0

    return tt


def node_utility(table: ProbabilityTable, mother_id: int) -> float:
    """Gain of busing the mother over leaving her alone."""
    return table.gain(mother_id, Kind.BUS_PICKUP)


def pickup_node(mother: Mother) -> RoutingNode:
    return RoutingNode("pickup", mother.id, mother.lat, mother.lon,
                       mother.pickup_earliest, mother.pickup_latest)


def _schedule(nodes: tuple[RoutingNode, ...], travel_time) -> tuple[list[float], int]:
    """Forward pass; returns arrivals and the index of the first node whose
    window is missed (-1 when the schedule fits)."""
    arrivals = [max(0.0, nodes[0].earliest)]
    for k in range(1, len(nodes)):
        arrive = arrivals[-1] + travel_time(nodes[k - 1], nodes[k])
        arrive = max(arrive, nodes[k].earliest)
        arrivals.append(arrive)
        if arrive > nodes[k].latest + 1e-9:
            return arrivals, k
    return arrivals, -1


def route_feasible(plan: RoutePlan, travel_time, capacity: int) -> tuple[bool, str | None]:
    nodes = plan.nodes
    if len(nodes) < 2 or nodes[0].kind != "depot" or nodes[-1].kind != "dropoff":
        return False, "endpoints: must start at a depot and end at a center"
    if any(n.kind != "pickup" for n in nodes[1:-1]):
        return False, "interior nodes must be pickups"
    if len(nodes) - 2 > capacity:
        return False, f"capacity: {len(nodes) - 2} pickups > {capacity}"
    arrivals, miss = _schedule(nodes, travel_time)
    if miss >= 0:
        return False, (f"time window: node {miss} ({nodes[miss].kind} {nodes[miss].ref_id}) "
                       f"reached at {arrivals[miss]:.1f} after {nodes[miss].latest:.1f}")
    return True, None


def _plan_with_nodes(plan: RoutePlan, nodes: tuple[RoutingNode, ...], travel_time,
                     table: ProbabilityTable) -> RoutePlan:
    arrivals, miss = _schedule(nodes, travel_time)
    picked = tuple(n.ref_id for n in nodes[1:-1])
    utility = sum(node_utility(table, m) for m in picked)
    return replace(plan, nodes=nodes, arrivals=tuple(arrivals), picked=picked,
                   utility=utility, feasible=(miss < 0))


class _VrpWorkspace:
    """Node-indexed view of one VRP: travel matrix, windows, utilities.

    Index 0 is the depot, the last index the drop-off center, everything
    between a candidate pickup (candidates sorted by mother id so index
    order is id order, which the tie-breaking rules lean on)."""

    def __init__(self, depot_node: RoutingNode, center_node: RoutingNode,
                 candidates: list[Mother], travel_time, table: ProbabilityTable):
        self.mothers = sorted(candidates, key=lambda m: m.id)
        self.nodes = ([depot_node] + [pickup_node(m) for m in self.mothers]
                      + [center_node])
        n = len(self.nodes)
        self.T = np.array([[travel_time(a, b) for b in self.nodes] for a in self.nodes])
        self.earliest = np.array([nd.earliest for nd in self.nodes])
        self.latest = np.array([nd.latest for nd in self.nodes])
        self.util = np.array([0.0] + [node_utility(table, m.id) for m in self.mothers]
                             + [0.0])
        self.end = n - 1

    def schedule_ok(self, seq: list[int]) -> bool:
        t = max(0.0, float(self.earliest[seq[0]]))
        for k in range(1, len(seq)):
            t += self.T[seq[k - 1], seq[k]]
            e = self.earliest[seq[k]]
            if t < e:
                t = e
            if t > self.latest[seq[k]] + 1e-9:
                return False
        return True

    def to_plan(self, template: RoutePlan, seq: list[int], travel_time,
                table: ProbabilityTable) -> RoutePlan:
        nodes = tuple(self.nodes[i] for i in seq)
        return _plan_with_nodes(template, nodes, travel_time, table)


def cheapest_insertion(day: int, center_node: RoutingNode, depot_node: RoutingNode,
                       candidates: list[Mother], travel_time, table: ProbabilityTable,
                       capacity: int, route_id: int = 0) -> RoutePlan:
    """Insert the (mother, position) pair with the best utility per added
    minute of travel until nothing else fits.

    Scores for every pair come from the travel matrix in one shot; only
    the best-scoring pairs get an exact schedule check, walking down the
    score order until one fits (same outcome as checking everything)."""
    base = (depot_node, center_node)
    plan = RoutePlan(route_id=route_id, day=day, center=center_node.ref_id,
                     depot=depot_node.ref_id, nodes=base, arrivals=(), picked=(),
                     utility=0.0)
    plan = _plan_with_nodes(plan, base, travel_time, table)
    if not plan.feasible:
        return plan

    ws = _VrpWorkspace(depot_node, center_node, candidates, travel_time, table)
    seq = [0, ws.end]
    unrouted = [i for i in range(1, ws.end) if ws.util[i] > 0.0]
    while len(seq) - 2 < capacity and unrouted:
        prev = np.array(seq[:-1])
        nxt = np.array(seq[1:])
        cand = np.array(unrouted)
        added = (ws.T[np.ix_(prev, cand)].T + ws.T[np.ix_(cand, nxt)]
                 - ws.T[prev, nxt][None, :])
        scores = ws.util[cand][:, None] / (1.0 + np.maximum(0.0, added))
        n_pos = len(seq) - 1
        ci = np.repeat(np.arange(len(cand)), n_pos)
        pp = np.tile(np.arange(n_pos), len(cand))
        order = np.lexsort((pp, cand[ci], -scores.ravel()))
        placed = False
        for o in order:
            c = int(cand[ci[o]])
            p = int(pp[o])
            trial = seq[:p + 1] + [c] + seq[p + 1:]
            if ws.schedule_ok(trial):
                seq = trial
                unrouted.remove(c)
                placed = True
                break
        if not placed:
            break
    return ws.to_plan(plan, seq, travel_time, table)


@dataclass(frozen=True)
class GlsConfig:
    time_limit_s: float | None = 30.0
    max_iterations: int | None = None  # iteration budget for reproducible runs
    penalty_factor: float = 0.1  # lambda = factor * mean arc travel time
    seed: int = 0  # kept for interface stability; the search is deterministic


def _arc_key(a: RoutingNode, b: RoutingNode) -> tuple:
    return (a.kind, a.ref_id, b.kind, b.ref_id)


def guided_local_search(initial: RoutePlan, candidates: list[Mother], travel_time,
                        table: ProbabilityTable, capacity: int,
                        config: GlsConfig = GlsConfig()) -> RoutePlan:
    """Improve a feasible plan's pickup utility with insert / remove /
    relocate / swap moves, penalizing arcs at local optima.

    Move gains are computed from arc deltas in O(1) and only the best
    candidates get exact schedule checks. The returned plan is the best
    feasible one seen, so utility never drops below the initial plan's.
    """
    if not initial.feasible:
        return initial
    iterations = config.max_iterations
    deadline = None
    if iterations is None:
        if config.time_limit_s is not None and config.time_limit_s <= 0:
            return initial
        deadline = (time.monotonic() + config.time_limit_s
                    if config.time_limit_s is not None else None)
    elif iterations <= 0:
        return initial

    ws = _VrpWorkspace(initial.nodes[0], initial.nodes[-1], candidates,
                       travel_time, table)
    id_to_idx = {m.id: i + 1 for i, m in enumerate(ws.mothers)}
    seq = [0] + [id_to_idx[mid] for mid in initial.picked] + [ws.end]
    util_total = float(ws.util[seq].sum())
    best_seq, best_util = list(seq), util_total

    penalties: dict[tuple[int, int], int] = {}
    lam = config.penalty_factor * max(1e-6, float(ws.T.mean()))

    def pen(a: int, b: int) -> int:
        return penalties.get((a, b), 0)

    it = 0
    while True:
        it += 1
        if iterations is not None and it > iterations:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
        move = _best_feasible_move(ws, seq, capacity, lam, pen)
        if move is None:
            # local optimum: penalize the currently costliest arc
            _penalize_arc(ws, seq, penalties)
            continue
        seq, delta_util = move
        util_total += delta_util
        if util_total > best_util + 1e-12:
            best_seq, best_util = list(seq), util_total
    return ws.to_plan(initial, best_seq, travel_time, table)


def _penalize_arc(ws: _VrpWorkspace, seq: list[int], penalties: dict) -> None:
    worst_key, worst_score = None, -1.0
    for k in range(len(seq) - 1):
        key = (seq[k], seq[k + 1])
        score = float(ws.T[key]) / (1.0 + penalties.get(key, 0))
        if score > worst_score + 1e-12:
            worst_key, worst_score = key, score
    if worst_key is not None:
        penalties[worst_key] = penalties.get(worst_key, 0) + 1


def _best_feasible_move(ws: _VrpWorkspace, seq: list[int], capacity: int,
                        lam: float, pen) -> tuple[list[int], float] | None:
    """Highest augmented-gain feasible move, or None at a local optimum.

    Candidate moves are ranked by their exact augmented gain (an O(1)
    arc-delta computation), then schedule-checked in rank order; the
    first feasible one is by construction the best feasible move."""
    routed = set(seq)
    unrouted = [i for i in range(1, ws.end) if i not in routed and ws.util[i] > 0.0]
    moves: list[tuple[float, tuple, list[int], float]] = []

    def arc_pen_delta(removed: list[tuple[int, int]], added: list[tuple[int, int]]) -> float:
        return (sum(pen(a, b) for a, b in added)
                - sum(pen(a, b) for a, b in removed))

    # insert c between positions p and p+1
    if len(seq) - 2 < capacity:
        for c in unrouted:
            for p in range(len(seq) - 1):
                a, b = seq[p], seq[p + 1]
                gain = float(ws.util[c]) - lam * arc_pen_delta([(a, b)], [(a, c), (c, b)])
                if gain > 1e-12:
                    moves.append((gain, (0, c, p), seq[:p + 1] + [c] + seq[p + 1:],
                                  float(ws.util[c])))
    # remove the pickup at index i
    for i in range(1, len(seq) - 1):
        a, k, b = seq[i - 1], seq[i], seq[i + 1]
        gain = -float(ws.util[k]) - lam * arc_pen_delta([(a, k), (k, b)], [(a, b)])
        if gain > 1e-12:
            moves.append((gain, (1, k, i), seq[:i] + seq[i + 1:], -float(ws.util[k])))
    # relocate the pickup at index i to position p of the remainder
    for i in range(1, len(seq) - 1):
        k = seq[i]
        rest = seq[:i] + seq[i + 1:]
        base_removed = [(seq[i - 1], k), (k, seq[i + 1])]
        base_added = [(seq[i - 1], seq[i + 1])]
        for p in range(len(rest) - 1):
            if p in (i - 1, i):
                continue  # reinserting where it came from is a no-op
            a, b = rest[p], rest[p + 1]
            gain = -lam * arc_pen_delta(base_removed + [(a, b)],
                                        base_added + [(a, k), (k, b)])
            if gain > 1e-12:
                moves.append((gain, (2, k, p), rest[:p + 1] + [k] + rest[p + 1:], 0.0))
    # swap the pickup at index i with an unrouted candidate
    for i in range(1, len(seq) - 1):
        a, k, b = seq[i - 1], seq[i], seq[i + 1]
        for c in unrouted:
            gain = (float(ws.util[c] - ws.util[k])
                    - lam * arc_pen_delta([(a, k), (k, b)], [(a, c), (c, b)]))
            if gain > 1e-12:
                moves.append((gain, (3, k, c), seq[:i] + [c] + seq[i + 1:],
                              float(ws.util[c] - ws.util[k])))

    moves.sort(key=lambda m: (-m[0], m[1]))
    for _gain, _tag, new_seq, delta_util in moves:
        if ws.schedule_ok(new_seq):
            return new_seq, delta_util
    return None


@dataclass(frozen=True)
class RoutePoolConfig:
    center_radius_km: float = 40.0
    speed_kmh: float = 25.0
    max_candidates: int | None = None  # top-utility shortlist per (day, center)
    gls: GlsConfig = GlsConfig()


def generate_route_pool(instance: Instance, table: ProbabilityTable,
                        remaining: list[int] | None = None,
                        config: RoutePoolConfig = RoutePoolConfig()) -> RoutePool:
    """One plan per (day, center), built over the remaining population."""
    ids = sorted(remaining) if remaining is not None else sorted(m.id for m in instance.mothers)
    mothers = [instance.mother(m) for m in ids]
    travel_time = make_travel_time(config.speed_kmh)
    depot_by_id = {d.id: d for d in instance.depots}

    plans: list[RoutePlan] = []
    route_id = 0
    for day in range(1, instance.horizon + 1):
        eligible = [m for m in mothers if m.elig_start <= day <= m.elig_end]
        for center in instance.centers:
            near = [m for m in eligible
                    if haversine_km(m.lat, m.lon, center.lat, center.lon) <= config.center_radius_km]
            if config.max_candidates is not None and len(near) > config.max_candidates:
                near = sorted(near, key=lambda m: (-node_utility(table, m.id), m.id))
                near = near[:config.max_candidates]
            depot = depot_by_id.get(center.depot_id)
            if depot is None:
                raise InputError(f"center {center.id} references unknown depot {center.depot_id}")
            depot_node = RoutingNode("depot", depot.id, depot.lat, depot.lon, 0.0, DAY_MINUTES)
            center_node = RoutingNode("dropoff", center.id, center.lat, center.lon,
                                      center.dropoff_earliest, center.dropoff_latest)
            plan = cheapest_insertion(day, center_node, depot_node, near, travel_time,
                                      table, instance.fleet.capacity, route_id=route_id)
            if plan.feasible:
                plan = guided_local_search(plan, near, travel_time, table,
                                           instance.fleet.capacity, config.gls)
                plan = replace(plan, route_id=route_id)
            plans.append(plan)
            route_id += 1
    return RoutePool(plans)
