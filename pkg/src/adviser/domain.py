"""Problem and solution data types shared by every stage of the planner.

Money is held as integer tenths of a currency unit so budget feasibility
checks stay exact (a phone call at 0.1 units is exactly 1 tenth).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Mapping, Sequence

import numpy as np

from .geo import KM_PER_DEG_LAT, haversine_km, haversine_km_vec, km_per_deg_lon

Money = int  # integer tenths of a currency unit

INCOME_LEVELS = (0, 1, 2, 3, 4)  # ordinal, 0 = lowest


class InputError(ValueError):
    """Raised when a caller passes data outside an operation's domain."""


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


class ContractError(RuntimeError):
    """Raised when a precondition that callers promised to uphold is broken."""


def money(units: float | int | str | Decimal) -> Money:
    """Convert a currency amount in units to integer tenths, exactly."""
    d = Decimal(str(units)) * 10
    if d != d.to_integral_value():
        raise ConfigError(f"money amount {units!r} is not a multiple of 0.1")
    return int(d)


def money_units(m: Money) -> float:
    """Tenths back to currency units (for display/serialization only)."""
    return m / 10.0


class Kind(enum.Enum):
    NONE = "none"
    PHONE_CALL = "phone_call"
    TRAVEL_VOUCHER = "travel_voucher"
    BUS_PICKUP = "bus_pickup"
    VACCINE_DRIVE = "vaccine_drive"


# column order used by ProbabilityTable rows
KIND_ORDER = (Kind.NONE, Kind.PHONE_CALL, Kind.TRAVEL_VOUCHER, Kind.BUS_PICKUP, Kind.VACCINE_DRIVE)
_KIND_COL = {k: i for i, k in enumerate(KIND_ORDER)}


@dataclass(frozen=True)
class CostSchedule:
    """Per-intervention prices, in tenths. Doing nothing is free."""

    call: Money
    voucher: Money
    drive: Money
    route: Money

    def cost_of(self, kind: Kind) -> Money:
        if kind is Kind.NONE:
            return 0
        return {
            Kind.PHONE_CALL: self.call,
            Kind.TRAVEL_VOUCHER: self.voucher,
            Kind.VACCINE_DRIVE: self.drive,
            Kind.BUS_PICKUP: self.route,
        }[kind]

    def violations(self) -> list["Violation"]:
        out = []
        if not (self.route > self.drive > self.voucher > self.call > 0):
            out.append(Violation("costs", "cost-ordering",
                                 f"expected route > drive > voucher > call > 0, got "
                                 f"({self.route}, {self.drive}, {self.voucher}, {self.call}) tenths"))
        return out


def default_costs() -> CostSchedule:
    """Field prices: call 0.1, voucher 1.1, drive 15, route 20 units."""
    return CostSchedule(call=money("0.1"), voucher=money("1.1"),
                        drive=money(15), route=money(20))


@dataclass(frozen=True)
class FeatureVector:
    income_level: int
    child_age_months: int
    prior_reminder: bool
    prior_vaccination: bool

    def as_array(self) -> np.ndarray:
        return np.array([self.income_level, self.child_age_months,
                         float(self.prior_reminder), float(self.prior_vaccination)])


FEATURE_DIM = 4


@dataclass(frozen=True)
class Mother:
    id: int
    lat: float
    lon: float
    cell: int
    elig_start: int
    elig_end: int
    pickup_earliest: int  # minutes of day
    pickup_latest: int
    features: FeatureVector


@dataclass(frozen=True)
class Grid:
    """Uniform cell grid over a geographic bounding box.

    Cells are indexed row-major from the south-west corner; distances are
    great-circle km from a point to the cell center.
    """

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    cell_size_km: float

    @property
    def n_rows(self) -> int:
        return max(1, math.ceil((self.lat_max - self.lat_min) * KM_PER_DEG_LAT / self.cell_size_km))

    @property
    def n_cols(self) -> int:
        mid = 0.5 * (self.lat_min + self.lat_max)
        return max(1, math.ceil((self.lon_max - self.lon_min) * km_per_deg_lon(mid) / self.cell_size_km))

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    def cell_center(self, g: int) -> tuple[float, float]:
        if not 0 <= g < self.n_cells:
            raise InputError(f"cell index {g} out of range [0, {self.n_cells})")
        r, c = divmod(g, self.n_cols)
        dlat = (self.lat_max - self.lat_min) / self.n_rows
        dlon = (self.lon_max - self.lon_min) / self.n_cols
        return (self.lat_min + (r + 0.5) * dlat, self.lon_min + (c + 0.5) * dlon)

    def cell_of(self, lat: float, lon: float) -> int:
        dlat = (self.lat_max - self.lat_min) / self.n_rows
        dlon = (self.lon_max - self.lon_min) / self.n_cols
        r = min(self.n_rows - 1, max(0, int((lat - self.lat_min) / dlat)))
        c = min(self.n_cols - 1, max(0, int((lon - self.lon_min) / dlon)))
        return r * self.n_cols + c

    def distance_km(self, lat: float, lon: float, g: int) -> float:
        clat, clon = self.cell_center(g)
        return haversine_km(lat, lon, clat, clon)


@dataclass(frozen=True)
class VaccinationCenter:
    id: int
    lat: float
    lon: float
    dropoff_earliest: int
    dropoff_latest: int
    depot_id: int


@dataclass(frozen=True)
class Depot:
    id: int
    lat: float
    lon: float


@dataclass(frozen=True)
class Bus:
    id: int
    depot_id: int


@dataclass(frozen=True)
class Fleet:
    buses: tuple[Bus, ...]
    capacity: int  # mothers per bus

    @property
    def count(self) -> int:
        return len(self.buses)


class ProbabilityTable:
    """Per-mother success probabilities, one row per intervention kind.

    Rows follow the domain ordering p_none <= p_call <= p_voucher <=
    p_pickup <= p_drive <= 1.
    """

    def __init__(self, rows: Mapping[int, Sequence[float]]):
        self._ids = sorted(rows)
        self._index = {m: i for i, m in enumerate(self._ids)}
        self._p = np.array([rows[m] for m in self._ids], dtype=float).reshape(len(self._ids), 5)

    @property
    def mother_ids(self) -> list[int]:
        return list(self._ids)

    def __contains__(self, mother_id: int) -> bool:
        return mother_id in self._index

    def __len__(self) -> int:
        return len(self._ids)

    def row(self, mother_id: int) -> tuple[float, ...]:
        if mother_id not in self._index:
            raise InputError(f"unknown mother id {mother_id}")
        return tuple(self._p[self._index[mother_id]])

    def prob(self, mother_id: int, kind: Kind) -> float:
        return self.row(mother_id)[_KIND_COL[kind]]

    def gain(self, mother_id: int, kind: Kind) -> float:
        r = self.row(mother_id)
        return r[_KIND_COL[kind]] - r[0]

    def column(self, kind: Kind) -> np.ndarray:
        """Probabilities for one kind, ordered by ascending mother id."""
        return self._p[:, _KIND_COL[kind]].copy()

    def as_dict(self) -> dict[int, tuple[float, ...]]:
        return {m: tuple(self._p[i]) for m, i in self._index.items()}

    def violations(self) -> list["Violation"]:
        out = []
        for m, i in self._index.items():
            r = self._p[i]
            if np.any(r < -1e-12) or np.any(r > 1 + 1e-12):
                out.append(Violation(f"mother {m}", "probability-range",
                                     f"probabilities outside [0,1]: {tuple(r)}"))
            if np.any(np.diff(r) < -1e-12):
                out.append(Violation(f"mother {m}", "probability-ordering",
                                     f"expected p_none <= p_call <= p_voucher <= p_pickup <= p_drive, got {tuple(r)}"))
        return out


@dataclass
class Instance:
    """One complete planning problem."""

    mothers: list[Mother]
    grid: Grid
    centers: list[VaccinationCenter]
    depots: list[Depot]
    fleet: Fleet
    horizon: int
    budget: Money
    costs: CostSchedule
    drive_radius_km: float
    drive_capacity: int  # mothers per drive
    probabilities: ProbabilityTable
    drive_cap: int | None = None  # optional max total drives

    _by_id: dict[int, Mother] = field(default_factory=dict, repr=False)
    _dist: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self._by_id = {m.id: m for m in self.mothers}

    def mother(self, mother_id: int) -> Mother:
        m = self._by_id.get(mother_id)
        if m is None:
            raise InputError(f"unknown mother id {mother_id}")
        return m

    def mother_index(self, mother_id: int) -> int:
        self.mother(mother_id)
        return self._index()[mother_id]

    def _index(self) -> dict[int, int]:
        if not hasattr(self, "_idx_cache"):
            self._idx_cache = {m.id: i for i, m in enumerate(self.mothers)}
        return self._idx_cache

    def distance_matrix(self) -> np.ndarray:
        """mothers x cells great-circle km, computed once."""
        if self._dist is None:
            lats = np.array([m.lat for m in self.mothers])
            lons = np.array([m.lon for m in self.mothers])
            cols = []
            for g in range(self.grid.n_cells):
                clat, clon = self.grid.cell_center(g)
                cols.append(haversine_km_vec(lats, lons, clat, clon))
            self._dist = np.stack(cols, axis=1) if cols else np.zeros((len(self.mothers), 0))
        return self._dist

    def distance_km(self, mother_id: int, g: int) -> float:
        return float(self.distance_matrix()[self._index()[mother_id], g])


@dataclass(frozen=True)
class Violation:
    entity: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: [{self.rule}] {self.message}"


@dataclass(frozen=True)
class Assignment:
    kind: Kind
    day: int | None = None
    cell: int | None = None
    bus: int | None = None
    route_id: int | None = None


@dataclass
class Allocation:
    """A full intervention plan: one assignment per mother plus the
    committed drives and operated routes that back them."""

    assignments: dict[int, Assignment]
    drives: dict[tuple[int, int], tuple[int, ...]]  # (cell, day) -> targeted mothers
    routes: dict[tuple[int, int, int], tuple[int, ...]]  # (day, bus, route_id) -> picked mothers
    total_cost: Money = 0
    objective: float = 0.0
    route_details: dict = field(default_factory=dict)  # optional plan payloads for serialization

    @property
    def operated_routes(self) -> set[tuple[int, int, int]]:
        return set(self.routes)

    def counts(self) -> dict[str, int]:
        out = {k.value: 0 for k in Kind}
        for a in self.assignments.values():
            out[a.kind.value] += 1
        return out


def empty_allocation(instance: Instance) -> Allocation:
    """All-none plan; every mother contributes her baseline probability."""
    assignments = {m.id: Assignment(Kind.NONE) for m in instance.mothers}
    alloc = Allocation(assignments=assignments, drives={}, routes={})
    finalize_allocation(instance, alloc)
    return alloc


def finalize_allocation(instance: Instance, alloc: Allocation) -> Allocation:
    alloc.total_cost = allocation_cost(instance, alloc)
    alloc.objective = objective_value(instance, alloc)
    return alloc


# ---------------------------------------------------------------------------
# operations


def eligibility(instance: Instance, mother_id: int, day: int) -> bool:
    """Whether the mother's eligibility window contains the day."""
    m = instance.mother(mother_id)
    if not 1 <= day <= instance.horizon:
        raise InputError(f"day {day} outside horizon [1, {instance.horizon}]")
    return m.elig_start <= day <= m.elig_end


def validate_instance(instance: Instance) -> list[Violation]:
    """All type invariants; an empty list means the instance is well formed."""
    v: list[Violation] = []
    if instance.horizon < 1:
        v.append(Violation("instance", "horizon", f"horizon {instance.horizon} < 1"))
    if instance.budget < 0:
        v.append(Violation("instance", "budget", f"budget {instance.budget} tenths < 0"))
    if instance.drive_radius_km <= 0:
        v.append(Violation("instance", "drive-radius", f"radius {instance.drive_radius_km} <= 0"))
    if instance.drive_capacity < 1:
        v.append(Violation("instance", "drive-capacity", f"capacity {instance.drive_capacity} < 1"))
    if instance.drive_cap is not None and instance.drive_cap < 0:
        v.append(Violation("instance", "drive-cap", f"cap {instance.drive_cap} < 0"))
    v.extend(instance.costs.violations())

    seen_ids: set[int] = set()
    for m in instance.mothers:
        ent = f"mother {m.id}"
        if m.id in seen_ids:
            v.append(Violation(ent, "duplicate-id", "mother id repeated"))
        seen_ids.add(m.id)
        if not (1 <= m.elig_start <= m.elig_end <= instance.horizon):
            v.append(Violation(ent, "eligibility-window-inverted",
                               f"window ({m.elig_start}, {m.elig_end}) not within [1, {instance.horizon}]"))
        if not m.pickup_earliest < m.pickup_latest:
            v.append(Violation(ent, "pickup-window",
                               f"window ({m.pickup_earliest}, {m.pickup_latest}) empty"))
        if m.features.income_level not in INCOME_LEVELS:
            v.append(Violation(ent, "income-level", f"{m.features.income_level} not in {INCOME_LEVELS}"))
        if m.features.child_age_months < 0:
            v.append(Violation(ent, "child-age", f"{m.features.child_age_months} < 0"))
        if instance.grid.n_cells and m.cell != instance.grid.cell_of(m.lat, m.lon):
            v.append(Violation(ent, "cell-mismatch",
                               f"cell {m.cell} != grid cell {instance.grid.cell_of(m.lat, m.lon)}"))
        if m.id not in instance.probabilities:
            v.append(Violation(ent, "missing-probabilities", "no probability row"))

    depot_ids = {d.id for d in instance.depots}
    for c in instance.centers:
        ent = f"center {c.id}"
        if not c.dropoff_earliest < c.dropoff_latest:
            v.append(Violation(ent, "dropoff-window",
                               f"window ({c.dropoff_earliest}, {c.dropoff_latest}) empty"))
        if c.depot_id not in depot_ids:
            v.append(Violation(ent, "unknown-depot", f"depot {c.depot_id} does not exist"))
    if instance.fleet.capacity < 1:
        v.append(Violation("fleet", "bus-capacity", f"capacity {instance.fleet.capacity} < 1"))
    for b in instance.fleet.buses:
        if b.depot_id not in depot_ids:
            v.append(Violation(f"bus {b.id}", "unknown-depot", f"depot {b.depot_id} does not exist"))

    for m in instance.probabilities.mother_ids:
        if m not in seen_ids:
            v.append(Violation(f"probability row {m}", "unknown-mother", "row for a mother not in the instance"))
    v.extend(instance.probabilities.violations())
    return v


def objective_value(instance: Instance, alloc: Allocation) -> float:
    """Sum over mothers of the success probability of their assigned
    intervention (baseline probability when unassigned)."""
    table = instance.probabilities
    total = 0.0
    for m in instance.mothers:
        a = alloc.assignments.get(m.id)
        if a is None:
            raise ContractError(f"allocation has no entry for mother {m.id}")
        total += table.prob(m.id, a.kind)
    if len(alloc.assignments) != len(instance.mothers):
        extra = set(alloc.assignments) - {m.id for m in instance.mothers}
        raise ContractError(f"allocation references unknown mothers {sorted(extra)[:5]}")
    return total


def allocation_cost(instance: Instance, alloc: Allocation) -> Money:
    """Calls and vouchers are charged per mother; drives and routes once."""
    c = instance.costs
    n_calls = sum(1 for a in alloc.assignments.values() if a.kind is Kind.PHONE_CALL)
    n_vouchers = sum(1 for a in alloc.assignments.values() if a.kind is Kind.TRAVEL_VOUCHER)
    return (n_calls * c.call + n_vouchers * c.voucher
            + len(alloc.drives) * c.drive + len(alloc.routes) * c.route)


def validate_allocation(instance: Instance, alloc: Allocation) -> list[Violation]:
    """Every structural constraint an allocation must satisfy."""
    v: list[Violation] = []
    table = instance.probabilities

    # one intervention per mother, tracked across assignment + membership lists
    touched: dict[int, list[str]] = {}

    def touch(mother_id: int, what: str):
        touched.setdefault(mother_id, []).append(what)

    for mid, a in alloc.assignments.items():
        ent = f"mother {mid}"
        if mid not in instance._by_id:
            v.append(Violation(ent, "unknown-mother", "assignment for a mother not in the instance"))
            continue
        if a.kind is Kind.NONE:
            continue
        if a.kind in (Kind.PHONE_CALL, Kind.TRAVEL_VOUCHER):
            # drive and pickup assignments are counted through the
            # membership lists below, so list/assignment double-bookings
            # surface as intervention violations
            touch(mid, a.kind.value)
        if a.day is None or not (1 <= a.day <= instance.horizon):
            v.append(Violation(ent, "assignment-day", f"day {a.day} outside horizon"))
            continue
        if not eligibility(instance, mid, a.day):
            v.append(Violation(ent, "eligibility", f"not eligible on day {a.day}"))
        if a.kind is Kind.VACCINE_DRIVE:
            key = (a.cell, a.day)
            if key not in alloc.drives:
                v.append(Violation(ent, "drive-existence", f"no committed drive at cell {a.cell} day {a.day}"))
            elif mid not in alloc.drives[key]:
                v.append(Violation(ent, "drive-membership", f"not in target list of drive {key}"))
            if a.cell is not None and a.cell < instance.grid.n_cells:
                d = instance.distance_km(mid, a.cell)
                if d > instance.drive_radius_km + 1e-9:
                    v.append(Violation(ent, "drive-radius",
                                       f"{d:.3f} km from cell {a.cell} > radius {instance.drive_radius_km} km"))
        elif a.kind is Kind.BUS_PICKUP:
            key = (a.day, a.bus, a.route_id)
            if key not in alloc.routes:
                v.append(Violation(ent, "route-operation", f"route {key} not operated"))
            elif mid not in alloc.routes[key]:
                v.append(Violation(ent, "route-membership", f"not picked up by route {key}"))

    for (cell, day), members in alloc.drives.items():
        ent = f"drive (cell {cell}, day {day})"
        for mid in members:
            touch(mid, f"drive({cell},{day})")
        if len(members) > instance.drive_capacity:
            v.append(Violation(ent, "drive-capacity",
                               f"{len(members)} mothers > capacity {instance.drive_capacity}"))
        if not 0 <= cell < instance.grid.n_cells:
            v.append(Violation(ent, "drive-cell", f"cell {cell} outside grid"))
        if len(set(members)) != len(members):
            v.append(Violation(ent, "drive-duplicates", "mother listed twice"))
        for mid in members:
            a = alloc.assignments.get(mid)
            if a is None or a.kind is not Kind.VACCINE_DRIVE or (a.cell, a.day) != (cell, day):
                v.append(Violation(ent, "drive-consistency",
                                   f"mother {mid} listed but not assigned to this drive"))

    bus_ids = {b.id for b in instance.fleet.buses}
    per_bus_day: dict[tuple[int, int], int] = {}
    for (day, bus, route_id), members in alloc.routes.items():
        ent = f"route (day {day}, bus {bus}, route {route_id})"
        for mid in members:
            touch(mid, f"route({day},{bus},{route_id})")
        if bus not in bus_ids:
            v.append(Violation(ent, "unknown-bus", f"bus {bus} not in fleet"))
        if len(members) > instance.fleet.capacity:
            v.append(Violation(ent, "bus-capacity",
                               f"{len(members)} pickups > capacity {instance.fleet.capacity}"))
        per_bus_day[(day, bus)] = per_bus_day.get((day, bus), 0) + 1
        for mid in members:
            a = alloc.assignments.get(mid)
            if a is None or a.kind is not Kind.BUS_PICKUP or (a.day, a.bus, a.route_id) != (day, bus, route_id):
                v.append(Violation(ent, "route-consistency",
                                   f"mother {mid} listed but not assigned to this route"))

    for (day, bus), n in per_bus_day.items():
        if n > 1:
            v.append(Violation(f"bus {bus}", "single-route-per-bus-day",
                               f"operates {n} routes on day {day}"))

    for mid, whats in touched.items():
        if len(whats) > 1:
            v.append(Violation(f"mother {mid}", "intervention",
                               f"more than one intervention: {whats}"))

    cost = allocation_cost(instance, alloc)
    if cost > instance.budget:
        v.append(Violation("allocation", "budget",
                           f"cost {cost} tenths > budget {instance.budget} tenths"))
    if instance.drive_cap is not None and len(alloc.drives) > instance.drive_cap:
        v.append(Violation("allocation", "drive-cap",
                           f"{len(alloc.drives)} drives > cap {instance.drive_cap}"))

    for mid in alloc.assignments:
        if mid in instance._by_id and mid not in table:
            v.append(Violation(f"mother {mid}", "missing-probabilities", "no probability row"))
    return v
