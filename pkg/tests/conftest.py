"""Shared builders for hand-sized and randomized tiny instances."""

from __future__ import annotations

import numpy as np
import pytest

from adviser.domain import (
    Bus,
    CostSchedule,
    Depot,
    FeatureVector,
    Fleet,
    Grid,
    Instance,
    Mother,
    ProbabilityTable,
    VaccinationCenter,
    money,
)
from adviser.routing import GlsConfig, RoutePoolConfig, generate_route_pool

FEATS = FeatureVector(income_level=1, child_age_months=10,
                      prior_reminder=True, prior_vaccination=False)

PAPER_COSTS = CostSchedule(call=money("0.1"), voucher=money("1.1"),
                           drive=money(15), route=money(20))
# drive only twice the voucher: lets the lazy rule fire on tiny populations
CHEAP_DRIVE_COSTS = CostSchedule(call=money("0.1"), voucher=money("1.1"),
                                 drive=money("2.2"), route=money(3))

TEST_POOL_CONFIG = RoutePoolConfig(gls=GlsConfig(time_limit_s=None, max_iterations=15))


def tiny_grid(n_cols: int = 2, cell_km: float = 1.2) -> Grid:
    lat_span = cell_km / 110.574 * 0.98
    lon_span = n_cols * cell_km / 110.4 * 0.98
    return Grid(7.30, 7.30 + lat_span, 3.85, 3.85 + lon_span, cell_size_km=cell_km)


def make_instance(mothers, table, *, grid=None, horizon=2, budget=money(30),
                  costs=CHEAP_DRIVE_COSTS, radius=1.5, drive_capacity=3,
                  centers=None, depots=None, buses=1, bus_capacity=3,
                  drive_cap=None) -> Instance:
    grid = grid or tiny_grid()
    depots = depots or [Depot(0, grid.lat_min + 0.001, grid.lon_min + 0.001)]
    centers = centers if centers is not None else [
        VaccinationCenter(0, grid.lat_max - 0.001, grid.lon_max - 0.001, 480, 1020, depots[0].id)]
    fleet = Fleet(buses=tuple(Bus(i, depots[i % len(depots)].id) for i in range(buses)),
                  capacity=bus_capacity)
    return Instance(mothers=mothers, grid=grid, centers=centers, depots=depots,
                    fleet=fleet, horizon=horizon, budget=budget, costs=costs,
                    drive_radius_km=radius, drive_capacity=drive_capacity,
                    probabilities=table, drive_cap=drive_cap)


def place_mothers(grid: Grid, points, horizon=2, rng=None, windows=None) -> list[Mother]:
    mothers = []
    for i, (lat, lon) in enumerate(points):
        if windows is not None:
            start, end = windows[i]
        else:
            start, end = 1, horizon
        mothers.append(Mother(id=i, lat=lat, lon=lon, cell=grid.cell_of(lat, lon),
                              elig_start=start, elig_end=end,
                              pickup_earliest=420, pickup_latest=900, features=FEATS))
    return mothers


def chain_table(rng: np.random.Generator, n: int) -> ProbabilityTable:
    rows = {}
    for i in range(n):
        p_n = float(rng.uniform(0, 0.8))
        p_c = float(rng.uniform(p_n, 1))
        p_t = float(rng.uniform(p_c, 1))
        p_l = float(rng.uniform(p_t, 1))
        rows[i] = (p_n, p_c, p_t, p_l, 1.0)
    return ProbabilityTable(rows)


def random_tiny_instance(seed: int, *, for_theorem: bool = False,
                         max_mothers: int = 8, costs_kind: str | None = None):
    """A brute-forceable instance plus its route pool.

    Capacities, budgets, and geometry are randomized but stay within the
    enumeration oracle's size guard (<= 3 cells, <= 2 days, <= 2 plans).
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, max_mothers + 1))
    n_cols = int(rng.integers(2, 4))
    horizon = int(rng.integers(1, 3))
    grid = tiny_grid(n_cols=n_cols)
    points = [(float(rng.uniform(grid.lat_min, grid.lat_max)),
               float(rng.uniform(grid.lon_min, grid.lon_max))) for _ in range(n)]
    windows = []
    for _ in range(n):
        start = int(rng.integers(1, horizon + 1))
        end = int(rng.integers(start, horizon + 1))
        windows.append((start, end))
    mothers = place_mothers(grid, points, horizon=horizon, windows=windows)
    table = chain_table(rng, n)

    if for_theorem:
        costs = CHEAP_DRIVE_COSTS
    elif costs_kind == "paper":
        costs = PAPER_COSTS
    elif costs_kind == "cheap":
        costs = CHEAP_DRIVE_COSTS
    else:
        costs = PAPER_COSTS if rng.random() < 0.4 else CHEAP_DRIVE_COSTS
    if for_theorem:
        budget = money(int(rng.integers(5, 20)))
    elif costs is PAPER_COSTS:
        budget = money(int(rng.integers(0, 40)))
    else:
        budget = money(int(rng.integers(0, 15)))
    drive_cap = None if rng.random() < 0.8 else int(rng.integers(1, 3))
    instance = make_instance(
        mothers, table, grid=grid, horizon=horizon, budget=budget, costs=costs,
        radius=float(rng.uniform(1.0, 2.2)),
        drive_capacity=int(rng.integers(2, 4)),
        buses=int(rng.integers(1, 3)), bus_capacity=int(rng.integers(2, 4)),
        drive_cap=drive_cap)
    pool = generate_route_pool(instance, table, None, TEST_POOL_CONFIG)
    return instance, pool


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
