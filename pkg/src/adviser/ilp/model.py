"""Integer-program construction over the post-pruning population.

Two encodings are supported. The default ("reduced") eliminates
no-intervention columns analytically, collapses call/voucher day choices
onto the first eligible day, and folds per-mother drive/route linking
into aggregated capacity rows, all of which preserve the binary optimum.
The "literal" encoding spells out every constraint family separately and
exists so tiny instances can be cross-checked against the reduced form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..domain import (
    Allocation,
    Assignment,
    ContractError,
    InputError,
    Instance,
    Kind,
    Money,
    ProbabilityTable,
    finalize_allocation,
)
from ..pruning import PruneState
from ..routing import RoutePool

_Z_EPS = 1e-12


@dataclass(frozen=True)
class Column:
    kind: str  # x | yn | yc | yt | z | u | q
    gain: float  # objective coefficient
    cost: Money  # budget-row coefficient
    mother: int | None = None
    day: int | None = None
    cell: int | None = None
    bus: int | None = None
    route: int | None = None


@dataclass(frozen=True)
class Row:
    name: str
    idx: np.ndarray
    coef: np.ndarray
    rhs: float


@dataclass(frozen=True)
class BuildConfig:
    literal: bool = False
    # cap on how many candidate drive cells each mother contributes
    # z-columns for (nearest first); None keeps every in-range cell
    drive_cells_per_mother: int | None = None
    # scale reductions: keep only the top (cell, day) drive groups by
    # static utility, and only the top members per group by gain (a drive
    # never targets more than its capacity, so a modest slack over
    # capacity loses nothing in practice)
    max_drive_groups: int | None = None
    drive_members_slack: int = 40  # extra members kept beyond capacity
    # resources already consumed elsewhere (hierarchical runs share the
    # fleet and the drive calendar across cluster solves)
    blocked_bus_days: frozenset = frozenset()
    blocked_cell_days: frozenset = frozenset()


@dataclass
class IlpModel:
    columns: list[Column]
    rows: list[Row]
    budget: Money
    objective_offset: float
    drive_cap: int | None
    literal: bool
    # option structure used by the relaxation bound and primal heuristic
    mother_options: dict[int, list[int]] = field(default_factory=dict)
    drive_groups: dict[tuple[int, int], tuple[int, list[int]]] = field(default_factory=dict)
    route_groups: dict[tuple[int, int, int], tuple[int, list[int]]] = field(default_factory=dict)
    bus_day_groups: dict[tuple[int, int], list[int]] = field(default_factory=dict)
    drive_capacity: int = 0
    bus_capacity: int = 0

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def gains(self) -> np.ndarray:
        return np.array([c.gain for c in self.columns])

    def check_assignment(self, values: np.ndarray, tol: float = 1e-9) -> list[str]:
        """Replay every row; empty result means the 0/1 vector is feasible."""
        bad = []
        for row in self.rows:
            lhs = float(values[row.idx] @ row.coef)
            if lhs > row.rhs + tol:
                bad.append(f"{row.name}: {lhs} > {row.rhs}")
        return bad

    def objective_of(self, values: np.ndarray) -> float:
        return self.objective_offset + float(values @ self.gains())

    def dump_lp(self) -> str:
        """Line-oriented text form of the program, for debugging."""
        lines = ["maximize"]
        terms = [f"{c.gain!r} v{i}" for i, c in enumerate(self.columns) if c.gain]
        lines.append("  " + " + ".join(terms) if terms else "  0")
        lines.append(f"  + {self.objective_offset!r}")
        lines.append("subject to")
        for row in self.rows:
            body = " + ".join(f"{float(c)!r} v{int(i)}" for i, c in zip(row.idx, row.coef))
            lines.append(f"  {row.name}: {body} <= {row.rhs!r}")
        lines.append("binary")
        for i, c in enumerate(self.columns):
            tag = f"m{c.mother}" if c.mother is not None else ""
            lines.append(f"  v{i} {c.kind} {tag} day={c.day} cell={c.cell} bus={c.bus} route={c.route}"
                         f" cost={c.cost}")
        return "\n".join(lines)


def _drive_members(instance: Instance, remaining: list[int], table: ProbabilityTable,
                   config: BuildConfig) -> dict[tuple[int, int], list[int]]:
    """Eligible in-range mothers per (cell, day), honoring the optional
    per-mother candidate-cell cap and the group-level scale reductions."""
    dist = instance.distance_matrix()
    idx = {m: instance.mother_index(m) for m in remaining}
    allowed: dict[int, set[int]] | None = None
    if config.drive_cells_per_mother is not None:
        allowed = {}
        for m in remaining:
            row = dist[idx[m]]
            near = np.flatnonzero(row <= instance.drive_radius_km + _Z_EPS)
            order = near[np.lexsort((near, row[near]))]
            allowed[m] = set(int(g) for g in order[:config.drive_cells_per_mother])

    members: dict[tuple[int, int], list[int]] = {}
    for m in remaining:
        mom = instance.mother(m)
        row = dist[idx[m]]
        cells = (np.flatnonzero(row <= instance.drive_radius_km + _Z_EPS)
                 if allowed is None else sorted(allowed[m]))
        for g in cells:
            for t in range(mom.elig_start, mom.elig_end + 1):
                members.setdefault((int(g), t), []).append(m)

    if config.max_drive_groups is not None:
        member_cap = instance.drive_capacity + config.drive_members_slack
        gains = {m: table.gain(m, Kind.VACCINE_DRIVE) for m in remaining}
        full_sets = {key: set(ms) for key, ms in members.items()}
        for key, ms in members.items():
            ms.sort(key=lambda m: (-gains[m], m))
            del ms[member_cap:]
        scored = sorted(
            ((-sum(gains[m] for m in ms[:instance.drive_capacity]), key)
             for key, ms in members.items()))
        keep = {key for _score, key in scored[:config.max_drive_groups]}
        # every mother keeps a drive option somewhere: stragglers whom the
        # group/member caps squeezed out get appended to their best group
        covered = {m for key in keep for m in members[key]}
        for m in remaining:
            if m in covered:
                continue
            for _score, key in scored:
                if m in full_sets[key]:
                    keep.add(key)
                    if m not in members[key]:
                        members[key].append(m)
                    covered.add(m)
                    break
        members = {key: sorted(ms) for key, ms in members.items() if key in keep}
    return members


def build_model(instance: Instance, table: ProbabilityTable, route_pool: RoutePool,
                prune_state: PruneState | None, budget: Money,
                config: BuildConfig = BuildConfig()) -> IlpModel:
    remaining = (sorted(prune_state.remaining_mothers) if prune_state is not None
                 else sorted(m.id for m in instance.mothers))
    for plan in route_pool.plans:
        for m in plan.picked:
            if m not in instance._by_id:
                raise InputError(f"route pool references unknown mother {m}")
    blocked = set(config.blocked_cell_days)
    if prune_state is not None:
        blocked |= prune_state.drive_cells
    cap = instance.drive_cap
    if cap is not None and prune_state is not None:
        cap = max(0, cap - len(prune_state.committed))

    if config.literal:
        return _build_literal(instance, table, route_pool, remaining, blocked, budget, cap, config)
    return _build_reduced(instance, table, route_pool, remaining, blocked, budget, cap, config)


def _build_reduced(instance, table, route_pool, remaining, blocked, budget, cap,
                   config: BuildConfig) -> IlpModel:
    costs = instance.costs
    columns: list[Column] = []
    rows: list[Row] = []
    mother_options: dict[int, list[int]] = {m: [] for m in remaining}

    offset = sum(table.prob(m, Kind.NONE) for m in remaining)
    for m in remaining:
        day = instance.mother(m).elig_start
        columns.append(Column("yc", table.gain(m, Kind.PHONE_CALL), costs.call, mother=m, day=day))
        mother_options[m].append(len(columns) - 1)
        columns.append(Column("yt", table.gain(m, Kind.TRAVEL_VOUCHER), costs.voucher, mother=m, day=day))
        mother_options[m].append(len(columns) - 1)

    drive_groups: dict[tuple[int, int], tuple[int, list[int]]] = {}
    members = _drive_members(instance, remaining, table, config)
    for (g, t) in sorted(members):
        if (g, t) in blocked:
            continue
        x_col = len(columns)
        columns.append(Column("x", 0.0, costs.drive, day=t, cell=g))
        zs = []
        for m in members[(g, t)]:
            zs.append(len(columns))
            columns.append(Column("z", table.gain(m, Kind.VACCINE_DRIVE), 0,
                                  mother=m, day=t, cell=g))
            mother_options[m].append(len(columns) - 1)
        drive_groups[(g, t)] = (x_col, zs)

    route_groups: dict[tuple[int, int, int], tuple[int, list[int]]] = {}
    bus_day_groups: dict[tuple[int, int], list[int]] = {}
    remaining_set = set(remaining)
    for plan in route_pool.plans:
        if not plan.feasible:
            continue
        picked = [m for m in plan.picked if m in remaining_set]
        if not picked:
            continue
        for bus in route_pool.buses_for(instance.fleet, plan):
            if (plan.day, bus) in config.blocked_bus_days:
                continue
            q_col = len(columns)
            columns.append(Column("q", 0.0, costs.route, day=plan.day, bus=bus, route=plan.route_id))
            us = []
            for m in picked:
                us.append(len(columns))
                columns.append(Column("u", table.gain(m, Kind.BUS_PICKUP), 0,
                                      mother=m, day=plan.day, bus=bus, route=plan.route_id))
                mother_options[m].append(len(columns) - 1)
            route_groups[(plan.day, bus, plan.route_id)] = (q_col, us)
            bus_day_groups.setdefault((plan.day, bus), []).append(q_col)

    for (g, t), (x_col, zs) in drive_groups.items():
        rows.append(Row(f"drive({g},{t})",
                        np.array(zs + [x_col]),
                        np.array([1.0] * len(zs) + [-float(instance.drive_capacity)]),
                        0.0))
    for key, (q_col, us) in route_groups.items():
        rows.append(Row(f"route{key}",
                        np.array(us + [q_col]),
                        np.array([1.0] * len(us) + [-float(instance.fleet.capacity)]),
                        0.0))
    for (t, f), qs in bus_day_groups.items():
        rows.append(Row(f"busday({t},{f})", np.array(qs), np.ones(len(qs)), 1.0))
    for m in remaining:
        opts = mother_options[m]
        if opts:
            rows.append(Row(f"mother({m})", np.array(opts), np.ones(len(opts)), 1.0))
    cost_idx = [i for i, c in enumerate(columns) if c.cost]
    rows.append(Row("budget", np.array(cost_idx, dtype=int),
                    np.array([float(columns[i].cost) for i in cost_idx]), float(budget)))
    if cap is not None:
        x_idx = [i for i, c in enumerate(columns) if c.kind == "x"]
        rows.append(Row("drive-cap", np.array(x_idx, dtype=int), np.ones(len(x_idx)), float(cap)))

    return IlpModel(columns=columns, rows=rows, budget=budget, objective_offset=offset,
                    drive_cap=cap, literal=False, mother_options=mother_options,
                    drive_groups=drive_groups, route_groups=route_groups,
                    bus_day_groups=bus_day_groups,
                    drive_capacity=instance.drive_capacity,
                    bus_capacity=instance.fleet.capacity)


def _build_literal(instance, table, route_pool, remaining, blocked, budget, cap,
                   config: BuildConfig) -> IlpModel:
    costs = instance.costs
    columns: list[Column] = []
    rows: list[Row] = []
    T = instance.horizon
    G = instance.grid.n_cells
    mother_options: dict[int, list[int]] = {m: [] for m in remaining}

    y_cols: dict[tuple[int, int, str], int] = {}
    for m in remaining:
        for t in range(1, T + 1):
            for kind, tag, cost in ((Kind.NONE, "yn", 0), (Kind.PHONE_CALL, "yc", costs.call),
                                    (Kind.TRAVEL_VOUCHER, "yt", costs.voucher)):
                y_cols[(m, t, tag)] = len(columns)
                columns.append(Column(tag, table.prob(m, kind), cost, mother=m, day=t))
                mother_options[m].append(len(columns) - 1)

    x_cols: dict[tuple[int, int], int] = {}
    z_cols: dict[tuple[int, int, int], int] = {}
    for t in range(1, T + 1):
        for g in range(G):
            if (g, t) in blocked:
                continue
            x_cols[(g, t)] = len(columns)
            columns.append(Column("x", 0.0, costs.drive, day=t, cell=g))
            for m in remaining:
                z_cols[(m, t, g)] = len(columns)
                columns.append(Column("z", table.prob(m, Kind.VACCINE_DRIVE), 0,
                                      mother=m, day=t, cell=g))
                mother_options[m].append(len(columns) - 1)

    q_cols: dict[tuple[int, int, int], int] = {}
    u_cols: dict[tuple[int, int, int, int], int] = {}
    remaining_set = set(remaining)
    for plan in route_pool.plans:
        if not plan.feasible:
            continue
        for bus in route_pool.buses_for(instance.fleet, plan):
            if (plan.day, bus) in config.blocked_bus_days:
                continue
            q_cols[(plan.day, bus, plan.route_id)] = len(columns)
            columns.append(Column("q", 0.0, costs.route, day=plan.day, bus=bus, route=plan.route_id))
            for m in plan.picked:
                if m in remaining_set:
                    u_cols[(m, plan.day, bus, plan.route_id)] = len(columns)
                    columns.append(Column("u", table.prob(m, Kind.BUS_PICKUP), 0,
                                          mother=m, day=plan.day, bus=bus, route=plan.route_id))
                    mother_options[m].append(len(columns) - 1)

    def a(m: int, t: int) -> float:
        mom = instance.mother(m)
        return 1.0 if mom.elig_start <= t <= mom.elig_end else 0.0

    one = np.ones(1)
    for (m, t, tag), j in y_cols.items():
        rows.append(Row(f"elig-y({m},{t},{tag})", np.array([j]), one, a(m, t)))
    dist = instance.distance_matrix()
    for (m, t, g), j in z_cols.items():
        rows.append(Row(f"elig-z({m},{t},{g})", np.array([j]), one, a(m, t)))
        rows.append(Row(f"link-z({m},{t},{g})", np.array([j, x_cols[(g, t)]]),
                        np.array([1.0, -1.0]), 0.0))
        rows.append(Row(f"radius({m},{t},{g})", np.array([j]),
                        np.array([float(dist[instance.mother_index(m), g])]),
                        float(instance.drive_radius_km)))
    for (g, t), _ in x_cols.items():
        zs = [z_cols[(m, t, g)] for m in remaining]
        if zs:
            rows.append(Row(f"drive-cap({g},{t})", np.array(zs), np.ones(len(zs)),
                            float(instance.drive_capacity)))
    for (m, t, f, r), j in u_cols.items():
        rows.append(Row(f"elig-u({m},{t},{f},{r})", np.array([j]), one, a(m, t)))
        rows.append(Row(f"link-u({m},{t},{f},{r})", np.array([j, q_cols[(t, f, r)]]),
                        np.array([1.0, -1.0]), 0.0))
    for (t, f, r), qj in q_cols.items():
        us = [u_cols[k] for k in u_cols if k[1] == t and k[2] == f and k[3] == r]
        if us:
            rows.append(Row(f"route-cap({t},{f},{r})", np.array(us), np.ones(len(us)),
                            float(instance.fleet.capacity)))
    bus_days = sorted({(t, f) for (t, f, _r) in q_cols})
    for (t, f) in bus_days:
        qs = [q_cols[k] for k in q_cols if k[0] == t and k[1] == f]
        rows.append(Row(f"busday({t},{f})", np.array(qs), np.ones(len(qs)), 1.0))
    for m in remaining:
        opts = mother_options[m]
        rows.append(Row(f"mother({m})", np.array(opts), np.ones(len(opts)), 1.0))
    cost_idx = [i for i, c in enumerate(columns) if c.cost]
    rows.append(Row("budget", np.array(cost_idx, dtype=int),
                    np.array([float(columns[i].cost) for i in cost_idx]), float(budget)))
    if cap is not None:
        x_idx = sorted(x_cols.values())
        rows.append(Row("drive-cap-total", np.array(x_idx, dtype=int), np.ones(len(x_idx)), float(cap)))

    drive_groups = {}
    for (g, t), xj in x_cols.items():
        zs = [z_cols[(m, t, g)] for m in remaining]
        drive_groups[(g, t)] = (xj, zs)
    route_groups = {}
    bus_day_groups: dict[tuple[int, int], list[int]] = {}
    for (t, f, r), qj in q_cols.items():
        us = [u_cols[k] for k in u_cols if k[1] == t and k[2] == f and k[3] == r]
        route_groups[(t, f, r)] = (qj, us)
        bus_day_groups.setdefault((t, f), []).append(qj)

    return IlpModel(columns=columns, rows=rows, budget=budget, objective_offset=0.0,
                    drive_cap=cap, literal=True, mother_options=mother_options,
                    drive_groups=drive_groups, route_groups=route_groups,
                    bus_day_groups=bus_day_groups,
                    drive_capacity=instance.drive_capacity,
                    bus_capacity=instance.fleet.capacity)


def extract_allocation(instance: Instance, model: IlpModel, solution, route_pool: RoutePool,
                       prune_state: PruneState | None) -> Allocation:
    """Merge the pruning phase's committed drives with the solver's
    assignment into one allocation."""
    if solution.status == "infeasible":
        raise ContractError("cannot extract an allocation from an infeasible solution")
    values = solution.values
    table = instance.probabilities

    assignments: dict[int, Assignment] = {m.id: Assignment(Kind.NONE) for m in instance.mothers}
    drives: dict[tuple[int, int], list[int]] = {}
    routes: dict[tuple[int, int, int], list[int]] = {}
    route_details: dict = {}

    for i, col in enumerate(model.columns):
        if values[i] < 0.5:
            continue
        if col.kind == "x":
            drives.setdefault((col.cell, col.day), [])
        elif col.kind == "z":
            drives.setdefault((col.cell, col.day), []).append(col.mother)
            assignments[col.mother] = Assignment(Kind.VACCINE_DRIVE, day=col.day, cell=col.cell)
        elif col.kind == "yc":
            assignments[col.mother] = Assignment(Kind.PHONE_CALL, day=col.day)
        elif col.kind == "yt":
            assignments[col.mother] = Assignment(Kind.TRAVEL_VOUCHER, day=col.day)
        elif col.kind == "q":
            key = (col.day, col.bus, col.route)
            routes.setdefault(key, [])
            plan = route_pool.by_id.get(col.route)
            if plan is not None:
                route_details[key] = plan
        elif col.kind == "u":
            key = (col.day, col.bus, col.route)
            routes.setdefault(key, []).append(col.mother)
            assignments[col.mother] = Assignment(Kind.BUS_PICKUP, day=col.day,
                                                 bus=col.bus, route_id=col.route)

    pruned_value = 0.0
    if prune_state is not None:
        for drive in prune_state.committed:
            drives[(drive.cell, drive.day)] = list(drive.mothers)
            for m in drive.mothers:
                assignments[m] = Assignment(Kind.VACCINE_DRIVE, day=drive.day, cell=drive.cell)
                pruned_value += table.prob(m, Kind.VACCINE_DRIVE)

    alloc = Allocation(
        assignments=assignments,
        drives={k: tuple(sorted(v)) for k, v in drives.items()},
        routes={k: tuple(sorted(v)) for k, v in routes.items()},
        route_details=route_details,
    )
    finalize_allocation(instance, alloc)
    expected = solution.objective + pruned_value
    if model.literal:
        # literal objective never counts unassigned mothers' baselines
        skipped = [m for m, a in assignments.items()
                   if a.kind is Kind.NONE and (prune_state is None or m not in prune_state.pruned_mothers)]
        got_yn = {model.columns[i].mother for i in range(len(model.columns))
                  if model.columns[i].kind == "yn" and values[i] > 0.5}
        expected += sum(table.prob(m, Kind.NONE) for m in skipped if m not in got_yn)
    if abs(alloc.objective - expected) > 1e-6:
        raise ContractError(
            f"objective mismatch: allocation {alloc.objective} vs solver {expected}")
    return alloc
