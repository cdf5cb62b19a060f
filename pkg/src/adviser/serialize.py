"""Canonical JSON forms for problem and solution objects.

All money fields carry a ``_tenths`` suffix and stay integers; canonical
dumps sort keys and carry no timestamps, so identical inputs always
produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from .domain import (
    Allocation,
    Assignment,
    Bus,
    CostSchedule,
    Depot,
    FeatureVector,
    Fleet,
    Grid,
    Instance,
    Kind,
    Mother,
    ProbabilityTable,
    VaccinationCenter,
    finalize_allocation,
)

PROB_KEYS = ("p_none", "p_call", "p_voucher", "p_pickup", "p_drive")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def content_hash(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()[:16]


def instance_to_dict(instance: Instance) -> dict:
    mothers = []
    for m in instance.mothers:
        row = instance.probabilities.row(m.id)
        mothers.append({
            "id": m.id, "lat": m.lat, "lon": m.lon, "cell": m.cell,
            "elig_start": m.elig_start, "elig_end": m.elig_end,
            "pickup_earliest": m.pickup_earliest, "pickup_latest": m.pickup_latest,
            "income_level": m.features.income_level,
            "child_age_months": m.features.child_age_months,
            "prior_reminder": m.features.prior_reminder,
            "prior_vaccination": m.features.prior_vaccination,
            **{k: float(v) for k, v in zip(PROB_KEYS, row)},
        })
    return {
        "horizon": instance.horizon,
        "budget_tenths": instance.budget,
        "drive_radius_km": instance.drive_radius_km,
        "drive_capacity": instance.drive_capacity,
        "drive_cap": instance.drive_cap,
        "costs_tenths": {
            "call": instance.costs.call, "voucher": instance.costs.voucher,
            "drive": instance.costs.drive, "route": instance.costs.route,
        },
        "grid": {
            "lat_min": instance.grid.lat_min, "lat_max": instance.grid.lat_max,
            "lon_min": instance.grid.lon_min, "lon_max": instance.grid.lon_max,
            "cell_size_km": instance.grid.cell_size_km,
        },
        "mothers": mothers,
        "centers": [{
            "id": c.id, "lat": c.lat, "lon": c.lon,
            "dropoff_earliest": c.dropoff_earliest, "dropoff_latest": c.dropoff_latest,
            "depot_id": c.depot_id,
        } for c in instance.centers],
        "depots": [{"id": d.id, "lat": d.lat, "lon": d.lon} for d in instance.depots],
        "fleet": {
            "capacity": instance.fleet.capacity,
            "buses": [{"id": b.id, "depot_id": b.depot_id} for b in instance.fleet.buses],
        },
    }


def instance_from_dict(data: dict) -> Instance:
    grid = Grid(**data["grid"])
    mothers = []
    rows = {}
    for md in data["mothers"]:
        mothers.append(Mother(
            id=md["id"], lat=md["lat"], lon=md["lon"], cell=md["cell"],
            elig_start=md["elig_start"], elig_end=md["elig_end"],
            pickup_earliest=md["pickup_earliest"], pickup_latest=md["pickup_latest"],
            features=FeatureVector(
                income_level=md["income_level"],
                child_age_months=md["child_age_months"],
                prior_reminder=bool(md["prior_reminder"]),
                prior_vaccination=bool(md["prior_vaccination"]),
            ),
        ))
        rows[md["id"]] = tuple(md[k] for k in PROB_KEYS)
    costs = CostSchedule(
        call=data["costs_tenths"]["call"], voucher=data["costs_tenths"]["voucher"],
        drive=data["costs_tenths"]["drive"], route=data["costs_tenths"]["route"])
    return Instance(
        mothers=mothers,
        grid=grid,
        centers=[VaccinationCenter(**c) for c in data["centers"]],
        depots=[Depot(**d) for d in data["depots"]],
        fleet=Fleet(buses=tuple(Bus(**b) for b in data["fleet"]["buses"]),
                    capacity=data["fleet"]["capacity"]),
        horizon=data["horizon"],
        budget=data["budget_tenths"],
        costs=costs,
        drive_radius_km=data["drive_radius_km"],
        drive_capacity=data["drive_capacity"],
        probabilities=ProbabilityTable(rows),
        drive_cap=data.get("drive_cap"),
    )


def allocation_to_dict(instance: Instance, alloc: Allocation) -> dict:
    assignments = []
    for mid in sorted(alloc.assignments):
        a = alloc.assignments[mid]
        assignments.append({
            "mother": mid, "kind": a.kind.value, "day": a.day,
            "cell": a.cell, "bus": a.bus, "route_id": a.route_id,
        })
    drives = [{"cell": g, "day": t, "mothers": list(alloc.drives[(g, t)])}
              for (g, t) in sorted(alloc.drives)]
    routes = []
    for key in sorted(alloc.routes):
        day, bus, route_id = key
        entry = {"day": day, "bus": bus, "route_id": route_id,
                 "mothers": list(alloc.routes[key])}
        plan = alloc.route_details.get(key)
        if plan is not None:
            entry["nodes"] = [{"kind": n.kind, "ref_id": n.ref_id,
                               "lat": n.lat, "lon": n.lon,
                               "earliest": n.earliest, "latest": n.latest}
                              for n in plan.nodes]
            entry["arrivals"] = [float(a) for a in plan.arrivals]
        routes.append(entry)
    return {
        "objective": float(alloc.objective),
        "cost_tenths": int(alloc.total_cost),
        "counts": alloc.counts(),
        "assignments": assignments,
        "drives": drives,
        "routes": routes,
    }


def allocation_from_dict(instance: Instance, data: dict) -> Allocation:
    assignments = {}
    for ad in data["assignments"]:
        assignments[ad["mother"]] = Assignment(
            kind=Kind(ad["kind"]), day=ad["day"], cell=ad["cell"],
            bus=ad["bus"], route_id=ad["route_id"])
    drives = {(d["cell"], d["day"]): tuple(d["mothers"]) for d in data["drives"]}
    routes = {(r["day"], r["bus"], r["route_id"]): tuple(r["mothers"])
              for r in data["routes"]}
    alloc = Allocation(assignments=assignments, drives=drives, routes=routes)
    return finalize_allocation(instance, alloc)
