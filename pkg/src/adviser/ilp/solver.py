"""Branch-and-bound over the binary allocation model.

Small models get exact LP-relaxation bounds from the in-repo simplex and
terminate with a certified optimum. Models past the simplex size gate
fall back to a budget-relaxation bound (drive and route seats priced at
cost/capacity, which every feasible solution weakly undercuts), a
ratio-greedy primal heuristic for incumbents, and bounded best-first
exploration; those runs report their remaining gap honestly.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..domain import ContractError
from ..simplex import lp_maximize
from .model import IlpModel

_INT_TOL = 1e-7
_PRUNE_TOL = 1e-9


@dataclass(frozen=True)
class SolveConfig:
    node_limit: int = 1_000_000
    time_limit_s: float | None = 60.0
    gap_tolerance: float = 0.0
    simplex_column_limit: int = 350
    simplex_total_limit: int = 1600  # columns + rows gate for the dense tableau


@dataclass
class IlpSolution:
    status: str  # optimal | feasible | infeasible
    values: np.ndarray
    objective: float
    bound: float
    gap: float
    node_count: int
    wall_time_s: float
    used_simplex: bool


@dataclass(order=True)
class _Node:
    neg_bound: float
    node_id: int
    fixings: dict[int, int] = field(compare=False)
    branch_col: int | None = field(compare=False, default=None)


class _ColumnIndex:
    """Reverse maps from columns to the groups they participate in."""

    def __init__(self, model: IlpModel):
        self.model = model
        self.z_group: dict[int, tuple[int, int]] = {}
        self.x_group: dict[int, tuple[int, int]] = {}
        for key, (x_col, zs) in model.drive_groups.items():
            self.x_group[x_col] = key
            for j in zs:
                self.z_group[j] = key
        self.u_group: dict[int, tuple[int, int, int]] = {}
        self.q_group: dict[int, tuple[int, int, int]] = {}
        for key, (q_col, us) in model.route_groups.items():
            self.q_group[q_col] = key
            for j in us:
                self.u_group[j] = key


def solve(model: IlpModel, config: SolveConfig = SolveConfig()) -> IlpSolution:
    t0 = time.perf_counter()
    n = model.n_columns
    use_simplex = (n <= config.simplex_column_limit
                   and n + model.n_rows <= config.simplex_total_limit)
    index = _ColumnIndex(model)

    incumbent: np.ndarray | None = None
    incumbent_gain = -math.inf  # objective minus the constant offset

    def consider(values: np.ndarray | None):
        nonlocal incumbent, incumbent_gain
        if values is None:
            return
        g = float(values @ gains)
        if g > incumbent_gain:
            incumbent, incumbent_gain = values, g

    gains = model.gains()
    consider(_greedy_incumbent(model, index, {}))

    if use_simplex:
        base_A, base_b = _dense_rows(model)
        bound_fn = lambda fx: _simplex_bound(model, base_A, base_b, fx)
    else:
        bound_fn = lambda fx: _structural_bound(model, index, fx)

    node_count = 0
    next_id = 0
    root = bound_fn({})
    heap: list[_Node] = []
    if root.feasible:
        consider(root.integral_values)
        if root.branch_col is not None:
            heap.append(_Node(-root.bound_gain, next_id, {}, root.branch_col))
            next_id += 1

    prune_slack = max(config.gap_tolerance, _PRUNE_TOL)
    tolerated_bound = -math.inf  # best bound among nodes closed by the gap tolerance
    status_limits_hit = False
    while heap:
        if node_count >= config.node_limit:
            status_limits_hit = True
            break
        if config.time_limit_s is not None and time.perf_counter() - t0 > config.time_limit_s:
            status_limits_hit = True
            break
        node = heapq.heappop(heap)
        bound_gain = -node.neg_bound
        if bound_gain <= incumbent_gain + prune_slack:
            tolerated_bound = max(tolerated_bound, bound_gain)
            continue
        node_count += 1
        for val in (1, 0):
            child_fix = dict(node.fixings)
            child_fix[node.branch_col] = val
            res = bound_fn(child_fix)
            if not res.feasible:
                continue
            if use_simplex and res.bound_gain > bound_gain + 1e-6:
                raise ContractError("child LP bound exceeded parent bound")
            # capping at the parent keeps the bound valid and monotone
            child_bound = min(res.bound_gain, bound_gain)
            consider(res.integral_values)
            if not use_simplex:
                consider(_greedy_incumbent(model, index, child_fix))
            if res.branch_col is None:
                continue
            if child_bound > incumbent_gain + prune_slack:
                heapq.heappush(heap, _Node(-child_bound, next_id, child_fix, res.branch_col))
                next_id += 1
            else:
                tolerated_bound = max(tolerated_bound, child_bound)

    open_bound = max((-nd.neg_bound for nd in heap), default=-math.inf)
    open_bound = max(open_bound, tolerated_bound)
    if incumbent is None:
        return IlpSolution(status="infeasible", values=np.zeros(n, dtype=np.int8),
                           objective=-math.inf, bound=model.objective_offset + open_bound,
                           gap=math.inf, node_count=node_count,
                           wall_time_s=time.perf_counter() - t0, used_simplex=use_simplex)

    bad = model.check_assignment(incumbent.astype(float))
    if bad:
        raise ContractError(f"solver produced an infeasible incumbent: {bad[:3]}")
    proven = (not status_limits_hit) and (open_bound <= incumbent_gain + _PRUNE_TOL)
    bound_gain = incumbent_gain if proven else max(open_bound, incumbent_gain)
    objective = model.objective_offset + incumbent_gain
    return IlpSolution(
        status="optimal" if proven else "feasible",
        values=incumbent.astype(np.int8),
        objective=objective,
        bound=model.objective_offset + bound_gain,
        gap=max(0.0, bound_gain - incumbent_gain),
        node_count=node_count,
        wall_time_s=time.perf_counter() - t0,
        used_simplex=use_simplex,
    )


@dataclass
class _BoundResult:
    feasible: bool
    bound_gain: float = -math.inf  # upper bound on objective minus offset
    branch_col: int | None = None
    integral_values: np.ndarray | None = None


def _dense_rows(model: IlpModel) -> tuple[np.ndarray, np.ndarray]:
    A = np.zeros((model.n_rows, model.n_columns))
    b = np.zeros(model.n_rows)
    for i, row in enumerate(model.rows):
        A[i, row.idx] = row.coef
        b[i] = row.rhs
    return A, b


def _simplex_bound(model: IlpModel, A: np.ndarray, b: np.ndarray,
                   fixings: dict[int, int]) -> _BoundResult:
    n = model.n_columns
    gains = model.gains()
    free = np.array([j for j in range(n) if j not in fixings], dtype=int)
    fixed_one = np.array([j for j, v in fixings.items() if v == 1], dtype=int)
    committed = float(gains[fixed_one].sum()) if len(fixed_one) else 0.0
    b_adj = b - (A[:, fixed_one].sum(axis=1) if len(fixed_one) else 0.0)
    if len(free) == 0:
        if np.all(b_adj >= -1e-9):
            values = np.zeros(n)
            values[fixed_one] = 1.0
            return _BoundResult(True, committed, None, values)
        return _BoundResult(False)

    A_free = A[:, free]
    upper = np.eye(len(free))
    A_lp = np.vstack([A_free, upper])
    b_lp = np.concatenate([b_adj, np.ones(len(free))])
    res = lp_maximize(gains[free], A_lp, b_lp)
    if res.status == "infeasible":
        return _BoundResult(False)
    if res.status != "optimal":
        raise ContractError(f"LP relaxation ended with status {res.status}")

    x = np.clip(res.x, 0.0, 1.0)
    frac = np.minimum(x, 1.0 - x)
    if frac.max() < _INT_TOL:
        values = np.zeros(n)
        values[fixed_one] = 1.0
        values[free] = np.round(x)
        if not model.check_assignment(values):
            return _BoundResult(True, committed + res.objective, None, values)
        # boundary rounding broke a row: fall through and branch instead
    j_local = int(np.argmax(frac))
    return _BoundResult(True, committed + res.objective, int(free[j_local]), None)


def _mother_option_points(model: IlpModel, index: _ColumnIndex, mother: int,
                          fixings: dict[int, int]) -> list[tuple[float, float, int]]:
    """(cost, gain, col) choices for one mother under the relaxed pricing."""
    pts: list[tuple[float, float, int]] = []
    for j in model.mother_options.get(mother, []):
        if fixings.get(j) == 0:
            continue
        col = model.columns[j]
        if col.kind == "z":
            key = index.z_group[j]
            x_col = model.drive_groups[key][0]
            if fixings.get(x_col) == 0:
                continue
            cost = 0.0 if fixings.get(x_col) == 1 else model.columns[x_col].cost / model.drive_capacity
        elif col.kind == "u":
            key = index.u_group[j]
            q_col = model.route_groups[key][0]
            if fixings.get(q_col) == 0:
                continue
            cost = 0.0 if fixings.get(q_col) == 1 else model.columns[q_col].cost / model.bus_capacity
        else:
            cost = float(col.cost)
        pts.append((cost, col.gain, j))
    return pts


def _hull_increments(points: list[tuple[float, float, int]]) -> list[tuple[float, float, float, int]]:
    """Concave frontier increments (ratio, dgain, dcost, col), ratios decreasing."""
    frontier: list[tuple[float, float, int]] = [(0.0, 0.0, -1)]
    for cost, gain, col in sorted(points, key=lambda p: (p[0], -p[1], p[2])):
        if gain <= frontier[-1][1] + 1e-15:
            continue
        while len(frontier) >= 2:
            c0, g0, _ = frontier[-2]
            c1, g1, _ = frontier[-1]
            r_prev = (g1 - g0) / max(c1 - c0, 1e-18)
            r_new = (gain - g1) / max(cost - c1, 1e-18)
            if r_new > r_prev - 1e-15:
                frontier.pop()
            else:
                break
        frontier.append((cost, gain, col))
    out = []
    for k in range(1, len(frontier)):
        dc = frontier[k][0] - frontier[k - 1][0]
        dg = frontier[k][1] - frontier[k - 1][1]
        ratio = math.inf if dc <= 1e-18 else dg / dc
        out.append((ratio, dg, dc, frontier[k][2]))
    return out


def _structural_bound(model: IlpModel, index: _ColumnIndex,
                      fixings: dict[int, int]) -> _BoundResult:
    """Fractional multiple-choice knapsack over per-mother options with
    capacity-diluted drive/route prices; a relaxation of the LP, so its
    value is a valid bound for every node."""
    committed_gain = 0.0
    committed_cost = 0.0
    committed_mothers: set[int] = set()
    opened_drives = 0
    for j, v in fixings.items():
        if v != 1:
            continue
        col = model.columns[j]
        committed_gain += col.gain
        committed_cost += col.cost
        if col.kind == "x":
            opened_drives += 1
        if col.mother is not None:
            if col.mother in committed_mothers:
                return _BoundResult(False)
            committed_mothers.add(col.mother)
        if col.kind == "z" and fixings.get(model.drive_groups[index.z_group[j]][0]) == 0:
            return _BoundResult(False)
        if col.kind == "u" and fixings.get(model.route_groups[index.u_group[j]][0]) == 0:
            return _BoundResult(False)
    if committed_cost > model.budget + 1e-9:
        return _BoundResult(False)
    if model.drive_cap is not None and opened_drives > model.drive_cap:
        return _BoundResult(False)

    increments: list[tuple[float, int, int, float, float, int]] = []
    for m in model.mother_options:
        if m in committed_mothers:
            continue
        pts = _mother_option_points(model, index, m, fixings)
        for k, (ratio, dg, dc, col) in enumerate(_hull_increments(pts)):
            increments.append((-ratio, m, k, dg, dc, col))
    increments.sort(key=lambda e: (e[0], e[1], e[2]))

    budget_left = float(model.budget) - committed_cost
    total = committed_gain
    branch_col = None
    for neg_ratio, m, k, dg, dc, col in increments:
        if dc <= budget_left + 1e-12:
            total += dg
            budget_left -= dc
        else:
            if budget_left > 1e-12 and not math.isinf(neg_ratio):
                total += (-neg_ratio) * budget_left
            branch_col = col
            break
    if branch_col is None:
        branch_col = _fallback_branch_col(model, fixings)
    if branch_col is None:
        # everything is fixed: this node is a single candidate assignment
        values = np.zeros(model.n_columns)
        for j, val in fixings.items():
            values[j] = float(val)
        if model.check_assignment(values):
            return _BoundResult(False)
        return _BoundResult(True, committed_gain, None, values)
    return _BoundResult(True, total, branch_col, None)


def _fallback_branch_col(model: IlpModel, fixings: dict[int, int]) -> int | None:
    for key in sorted(model.drive_groups):
        x_col, _ = model.drive_groups[key]
        if x_col not in fixings:
            return x_col
    for key in sorted(model.route_groups):
        q_col, _ = model.route_groups[key]
        if q_col not in fixings:
            return q_col
    for j in range(model.n_columns):
        if j not in fixings:
            return j
    return None


def _greedy_incumbent(model: IlpModel, index: _ColumnIndex,
                      fixings: dict[int, int]) -> np.ndarray | None:
    """Deterministic ratio-greedy construction respecting node fixings.

    Bundles (whole drives, whole routes) compete with per-mother calls
    and vouchers on value per tenth spent; values are maintained lazily
    since committing one bundle only ever lowers the others.
    """
    n = model.n_columns
    v = np.zeros(n)
    budget = float(model.budget)
    mother_used: set[int] = set()
    assigned_col: dict[int, int] = {}  # mother -> her committed column
    drive_open: set[tuple[int, int]] = set()
    route_open: set[tuple[int, int, int]] = set()
    busday_used: set[tuple[int, int]] = set()
    group_used: dict = {}
    drives_opened = 0
    cap = model.drive_cap

    def open_drive(key) -> bool:
        nonlocal budget, drives_opened
        x_col, _ = model.drive_groups[key]
        if fixings.get(x_col) == 0 or key in drive_open:
            return key in drive_open
        if cap is not None and drives_opened >= cap:
            return False
        cost = model.columns[x_col].cost
        if cost > budget:
            return False
        v[x_col] = 1
        budget -= cost
        drive_open.add(key)
        drives_opened += 1
        return True

    def open_route(key) -> bool:
        nonlocal budget
        q_col, _ = model.route_groups[key]
        if fixings.get(q_col) == 0 or key in route_open:
            return key in route_open
        busday = (key[0], key[1])
        if busday in busday_used:
            return False
        cost = model.columns[q_col].cost
        if cost > budget:
            return False
        v[q_col] = 1
        budget -= cost
        route_open.add(key)
        busday_used.add(busday)
        return True

    # honor fixings first: x/q before the member columns that need them
    ordered = sorted(fixings.items(), key=lambda kv: (model.columns[kv[0]].kind not in ("x", "q"), kv[0]))
    for j, val in ordered:
        if val != 1:
            continue
        col = model.columns[j]
        if col.kind == "x":
            key = index.x_group[j]
            if cap is not None and drives_opened >= cap:
                return None
            if model.columns[j].cost > budget:
                return None
            if key not in drive_open:
                v[j] = 1
                budget -= col.cost
                drive_open.add(key)
                drives_opened += 1
        elif col.kind == "q":
            key = index.q_group[j]
            if (key[0], key[1]) in busday_used or col.cost > budget:
                return None
            v[j] = 1
            budget -= col.cost
            route_open.add(key)
            busday_used.add((key[0], key[1]))
        elif col.kind in ("yc", "yt", "yn"):
            if col.mother in mother_used or col.cost > budget:
                return None
            v[j] = 1
            budget -= col.cost
            mother_used.add(col.mother)
            assigned_col[col.mother] = j
        elif col.kind == "z":
            key = index.z_group[j]
            if col.mother in mother_used:
                return None
            if not open_drive(key):
                return None
            if group_used.get(key, 0) >= model.drive_capacity:
                return None
            v[j] = 1
            group_used[key] = group_used.get(key, 0) + 1
            mother_used.add(col.mother)
            assigned_col[col.mother] = j
        elif col.kind == "u":
            key = index.u_group[j]
            if col.mother in mother_used:
                return None
            if not open_route(key):
                return None
            if group_used.get(key, 0) >= model.bus_capacity:
                return None
            v[j] = 1
            group_used[key] = group_used.get(key, 0) + 1
            mother_used.add(col.mother)
            assigned_col[col.mother] = j

    def drive_value(key) -> tuple[float, list[int]]:
        x_col, zs = model.drive_groups[key]
        room = model.drive_capacity - group_used.get(key, 0)
        chosen, total = [], 0.0
        for j in sorted(zs, key=lambda jj: (-model.columns[jj].gain, jj)):
            if room == 0:
                break
            col = model.columns[j]
            if fixings.get(j) == 0 or col.mother in mother_used or col.gain <= 0 or v[j]:
                continue
            chosen.append(j)
            total += col.gain
            room -= 1
        return total, chosen

    def route_value(key) -> tuple[float, list[int]]:
        q_col, us = model.route_groups[key]
        room = model.bus_capacity - group_used.get(key, 0)
        chosen, total = [], 0.0
        for j in sorted(us, key=lambda jj: (-model.columns[jj].gain, jj)):
            if room == 0:
                break
            col = model.columns[j]
            if fixings.get(j) == 0 or col.mother in mother_used or col.gain <= 0 or v[j]:
                continue
            chosen.append(j)
            total += col.gain
            room -= 1
        return total, chosen

    def single_value(j) -> float:
        col = model.columns[j]
        if fixings.get(j) == 0 or col.mother in mother_used or v[j]:
            return 0.0
        return max(0.0, col.gain)

    def bundle_cost(kind, key) -> float:
        if kind == "drive":
            x_col, _ = model.drive_groups[key]
            return 0.0 if key in drive_open else float(model.columns[x_col].cost)
        if kind == "route":
            q_col, _ = model.route_groups[key]
            return 0.0 if key in route_open else float(model.columns[q_col].cost)
        return float(model.columns[key].cost)

    def ratio(value, cost) -> float:
        return math.inf if cost <= 0 else value / cost

    heap: list[tuple[float, int, object, float]] = []  # (-ratio, tie, entry, value)
    tie = 0
    for key in sorted(model.drive_groups):
        if fixings.get(model.drive_groups[key][0]) == 0:
            continue
        val, _ = drive_value(key)
        if val > 0:
            heap.append((-ratio(val, bundle_cost("drive", key)), tie, ("drive", key), val))
            tie += 1
    for key in sorted(model.route_groups):
        if fixings.get(model.route_groups[key][0]) == 0:
            continue
        val, _ = route_value(key)
        if val > 0:
            heap.append((-ratio(val, bundle_cost("route", key)), tie, ("route", key), val))
            tie += 1
    for j, col in enumerate(model.columns):
        if col.kind in ("yc", "yt", "yn") and fixings.get(j) != 0 and not v[j]:
            val = single_value(j)
            if val > 0:
                heap.append((-ratio(val, float(col.cost)), tie, ("single", j), val))
                tie += 1
    heapq.heapify(heap)

    while heap:
        neg_r, _t, entry, stored_val = heapq.heappop(heap)
        kind, key = entry
        if kind == "drive":
            val, chosen = drive_value(key)
        elif kind == "route":
            val, chosen = route_value(key)
        else:
            val, chosen = single_value(key), [key]
        cost = bundle_cost(kind, key)
        if val <= 0:
            continue
        r = ratio(val, cost)
        if r + 1e-15 < -neg_r:  # stale, refresh
            tie += 1
            heapq.heappush(heap, (-r, tie, entry, val))
            continue
        if cost > budget:
            continue
        if kind == "drive":
            if cap is not None and key not in drive_open and drives_opened >= cap:
                continue
            if not open_drive(key):
                continue
            for j in chosen:
                v[j] = 1
                mother_used.add(model.columns[j].mother)
                assigned_col[model.columns[j].mother] = j
            group_used[key] = group_used.get(key, 0) + len(chosen)
        elif kind == "route":
            if not open_route(key):
                continue
            for j in chosen:
                v[j] = 1
                mother_used.add(model.columns[j].mother)
                assigned_col[model.columns[j].mother] = j
            group_used[key] = group_used.get(key, 0) + len(chosen)
        else:
            j = key
            v[j] = 1
            budget -= model.columns[j].cost
            mother_used.add(model.columns[j].mother)
            assigned_col[model.columns[j].mother] = j

    # ratio order lets cheap calls grab mothers that whole drives would
    # serve better; sweep those mothers back into drives while that pays
    def reassignable(m: int) -> tuple[float, float, int | None]:
        cur = assigned_col.get(m)
        if cur is None:
            return 0.0, 0.0, None
        col = model.columns[cur]
        if col.kind not in ("yc", "yt", "yn") or fixings.get(cur) == 1:
            return math.nan, math.nan, cur  # locked in place
        return col.gain, float(col.cost), cur

    def bundle_reassign_candidate(kind, key):
        """Best absorbable member set for one drive/route bundle."""
        if kind == "drive":
            head_col, member_cols = model.drive_groups[key]
            room = model.drive_capacity - group_used.get(key, 0)
            is_open = key in drive_open
            if not is_open and cap is not None and drives_opened >= cap:
                return None
        else:
            head_col, member_cols = model.route_groups[key]
            room = model.bus_capacity - group_used.get(key, 0)
            is_open = key in route_open
            if not is_open and (key[0], key[1]) in busday_used:
                return None
        if fixings.get(head_col) == 0 or room <= 0:
            return None
        open_cost = 0.0 if is_open else float(model.columns[head_col].cost)
        members = []
        for j in sorted(member_cols, key=lambda jj: (-model.columns[jj].gain, jj)):
            col = model.columns[j]
            if fixings.get(j) == 0 or v[j]:
                continue
            cur_gain, cur_cost, cur = reassignable(col.mother)
            if math.isnan(cur_gain):
                continue
            dgain = col.gain - cur_gain
            if dgain <= 1e-12:
                continue
            members.append((dgain, cur_cost, j, cur))
            if len(members) == room:
                break
        if not members:
            return None
        value = sum(dg for dg, _c, _j, _cur in members)
        dcost = open_cost - sum(c for _dg, c, _j, _cur in members)
        if dcost > budget:
            return None
        score = math.inf if dcost <= 0 else value / dcost
        return (-score, -value, 0 if kind == "drive" else 1, key, members)

    while True:
        best = None
        for key in sorted(model.drive_groups):
            cand = bundle_reassign_candidate("drive", key)
            if cand is not None and (best is None or cand < best):
                best = cand
        for key in sorted(model.route_groups):
            cand = bundle_reassign_candidate("route", key)
            if cand is not None and (best is None or cand < best):
                best = cand
        if best is None:
            break
        _negs, _negv, kind_code, key, members = best
        opened = open_drive(key) if kind_code == 0 else open_route(key)
        if not opened:
            break
        for _dg, released, j, cur in members:
            if cur is not None:
                v[cur] = 0
                budget += released
            v[j] = 1
            assigned_col[model.columns[j].mother] = j
            mother_used.add(model.columns[j].mother)
        group_used[key] = group_used.get(key, 0) + len(members)

    # leftover budget: cover whoever is still unassigned, best ratio first
    singles = []
    for j, col in enumerate(model.columns):
        if (col.kind in ("yc", "yt", "yn") and fixings.get(j) != 0
                and col.mother not in mother_used and col.gain > 0):
            r = math.inf if col.cost <= 0 else col.gain / col.cost
            singles.append((-r, -col.gain, col.mother, j))
    singles.sort()
    for _negr, _negg, m, j in singles:
        if m in mother_used or model.columns[j].cost > budget:
            continue
        v[j] = 1
        budget -= model.columns[j].cost
        mother_used.add(m)
        assigned_col[m] = j

    _upgrade_pass(model, v, fixings, budget)
    if model.check_assignment(v):
        return None
    return v


def _upgrade_pass(model: IlpModel, v: np.ndarray, fixings: dict[int, int],
                  budget: float) -> None:
    """Swap committed calls up to vouchers while budget remains."""
    by_mother: dict[int, dict[str, int]] = {}
    for j, col in enumerate(model.columns):
        if col.kind in ("yc", "yt") and col.mother is not None:
            by_mother.setdefault(col.mother, {})[col.kind] = j
    cands = []
    for m, cols in sorted(by_mother.items()):
        jc, jt = cols.get("yc"), cols.get("yt")
        if jc is None or jt is None or not v[jc] or fixings.get(jc) == 1 or fixings.get(jt) == 0:
            continue
        dg = model.columns[jt].gain - model.columns[jc].gain
        dc = model.columns[jt].cost - model.columns[jc].cost
        if dg > 0 and dc > 0:
            cands.append((-dg / dc, m, jc, jt, dc))
    cands.sort()
    for _r, _m, jc, jt, dc in cands:
        if dc <= budget:
            v[jc] = 0
            v[jt] = 1
            budget -= dc
