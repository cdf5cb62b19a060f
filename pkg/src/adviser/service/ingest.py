"""CSV ingestion: parse the three upload files plus a config into a
validated instance.

Schema errors name the offending row and column; domain violations are
reported with the entity and rule from the validator.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from ..domain import (
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
    default_costs,
    money,
    validate_instance,
)
from ..estimation import SurveyConstants, assemble_probability_table, default_source_pool, fit_logistic
from ..serialize import content_hash

MOTHER_COLUMNS = ("id", "lat", "lon", "elig_start", "elig_end", "pickup_earliest",
                  "pickup_latest", "income_level", "child_age_months",
                  "prior_reminder", "prior_vaccination")
PROB_COLUMNS = ("p_n", "p_c", "p_t", "p_l", "p_v")
CENTER_COLUMNS = ("id", "lat", "lon", "dropoff_earliest", "dropoff_latest", "depot_id")
DEPOT_COLUMNS = ("id", "lat", "lon")


class SchemaError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations[:5]))


def _reader(name: str, text: str, required: tuple[str, ...]) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise SchemaError(f"{name}: no data rows")
    header = rows[0].keys()
    for col in required:
        if col not in header:
            raise SchemaError(f"{name}: missing column '{col}'")
    return rows


def _value(name: str, row_num: int, row: dict, col: str, cast):
    raw = row.get(col)
    if raw is None or raw == "":
        raise SchemaError(f"{name} row {row_num}: empty value in column '{col}'")
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise SchemaError(f"{name} row {row_num}: cannot parse '{raw}' in column '{col}'")


def _bool(raw: str) -> bool:
    if raw not in ("0", "1"):
        raise ValueError(raw)
    return raw == "1"


def parse_instance_files(mothers_csv: str, centers_csv: str, depots_csv: str,
                         config: dict) -> Instance:
    mother_rows = _reader("mothers.csv", mothers_csv, MOTHER_COLUMNS)
    center_rows = _reader("centers.csv", centers_csv, CENTER_COLUMNS)
    depot_rows = _reader("depots.csv", depots_csv, DEPOT_COLUMNS)

    has_probs = all(c in mother_rows[0] for c in PROB_COLUMNS)
    mothers: list[Mother] = []
    prob_rows: dict[int, tuple[float, ...]] = {}
    for i, row in enumerate(mother_rows, start=2):  # header is line 1
        mid = _value("mothers.csv", i, row, "id", int)
        mothers.append(Mother(
            id=mid,
            lat=_value("mothers.csv", i, row, "lat", float),
            lon=_value("mothers.csv", i, row, "lon", float),
            cell=0,  # assigned below once the grid exists
            elig_start=_value("mothers.csv", i, row, "elig_start", int),
            elig_end=_value("mothers.csv", i, row, "elig_end", int),
            pickup_earliest=_value("mothers.csv", i, row, "pickup_earliest", int),
            pickup_latest=_value("mothers.csv", i, row, "pickup_latest", int),
            features=FeatureVector(
                income_level=_value("mothers.csv", i, row, "income_level", int),
                child_age_months=_value("mothers.csv", i, row, "child_age_months", int),
                prior_reminder=_value("mothers.csv", i, row, "prior_reminder", _bool),
                prior_vaccination=_value("mothers.csv", i, row, "prior_vaccination", _bool),
            ),
        ))
        if has_probs:
            prob_rows[mid] = tuple(_value("mothers.csv", i, row, c, float) for c in PROB_COLUMNS)

    depots = [Depot(id=_value("depots.csv", i, r, "id", int),
                    lat=_value("depots.csv", i, r, "lat", float),
                    lon=_value("depots.csv", i, r, "lon", float))
              for i, r in enumerate(depot_rows, start=2)]
    centers = [VaccinationCenter(
        id=_value("centers.csv", i, r, "id", int),
        lat=_value("centers.csv", i, r, "lat", float),
        lon=_value("centers.csv", i, r, "lon", float),
        dropoff_earliest=_value("centers.csv", i, r, "dropoff_earliest", int),
        dropoff_latest=_value("centers.csv", i, r, "dropoff_latest", int),
        depot_id=_value("centers.csv", i, r, "depot_id", int))
        for i, r in enumerate(center_rows, start=2)]

    grid = _grid_from_config(config, mothers, centers, depots)
    mothers = [Mother(id=m.id, lat=m.lat, lon=m.lon, cell=grid.cell_of(m.lat, m.lon),
                      elig_start=m.elig_start, elig_end=m.elig_end,
                      pickup_earliest=m.pickup_earliest, pickup_latest=m.pickup_latest,
                      features=m.features)
               for m in mothers]

    if not has_probs:
        prob_rows = _estimate_probabilities(mothers, mothers_csv)

    costs = _costs_from_config(config)
    budget = (config["budget_tenths"] if "budget_tenths" in config
              else money(config.get("budget_units", 0)))
    fleet = _fleet_from_config(config, depots)
    instance = Instance(
        mothers=mothers, grid=grid, centers=centers, depots=depots, fleet=fleet,
        horizon=int(config.get("horizon", 30)),
        budget=budget, costs=costs,
        drive_radius_km=float(config.get("drive_radius_km", 2.0)),
        drive_capacity=int(config.get("drive_capacity", 100)),
        probabilities=ProbabilityTable(prob_rows),
        drive_cap=config.get("drive_cap"),
    )
    violations = validate_instance(instance)
    if violations:
        raise ValidationError(violations)
    return instance


def _grid_from_config(config, mothers, centers, depots) -> Grid:
    if "grid" in config:
        return Grid(**config["grid"])
    lats = [p.lat for p in mothers] + [c.lat for c in centers] + [d.lat for d in depots]
    lons = [p.lon for p in mothers] + [c.lon for c in centers] + [d.lon for d in depots]
    pad = 0.002
    return Grid(min(lats) - pad, max(lats) + pad, min(lons) - pad, max(lons) + pad,
                cell_size_km=float(config.get("cell_size_km", 1.0)))


def _costs_from_config(config) -> CostSchedule:
    if "costs_tenths" in config:
        return CostSchedule(**config["costs_tenths"])
    if "costs_units" in config:
        cu = config["costs_units"]
        return CostSchedule(call=money(cu["call"]), voucher=money(cu["voucher"]),
                            drive=money(cu["drive"]), route=money(cu["route"]))
    return default_costs()


def _fleet_from_config(config, depots) -> Fleet:
    capacity = int(config.get("bus_capacity", 30))
    if "buses" in config:
        buses = tuple(Bus(id=b["id"], depot_id=b["depot_id"]) for b in config["buses"])
    else:
        n = int(config.get("n_buses", 4))
        buses = tuple(Bus(id=i, depot_id=depots[i % len(depots)].id) for i in range(n))
    return Fleet(buses=buses, capacity=capacity)


def _estimate_probabilities(mothers, mothers_csv: str) -> dict[int, tuple[float, ...]]:
    """Fill missing probability columns with the regression path, seeded
    by the upload bytes so identical files get identical tables."""
    seed = int(content_hash(mothers_csv), 16) % (2 ** 63)
    rng = np.random.default_rng(seed)
    pool = default_source_pool()
    base_labels = rng.random(len(pool)) < 0.13
    call_labels = rng.random(len(pool)) < 0.30
    for labels in (base_labels, call_labels):
        if labels.all() or not labels.any():
            labels[0] = not labels[0]
    model_base = fit_logistic([(f, bool(l)) for f, l in zip(pool, base_labels)])
    model_call = fit_logistic([(f, bool(l)) for f, l in zip(pool, call_labels)])
    table = assemble_probability_table(mothers, model_base, model_call,
                                       SurveyConstants(voucher=None, pickup=None), rng=rng)
    return table.as_dict()
