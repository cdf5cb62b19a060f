/** Scenario comparison: numeric deltas plus the map-layer diff. */

import type { InterventionCounts, JobResult } from "./types.js";

export interface CountDelta {
  kind: keyof InterventionCounts;
  a: number;
  b: number;
  delta: number;
}

export interface ScenarioDiff {
  objectiveDelta: number;
  costDeltaTenths: number;
  countDeltas: CountDelta[];
  drivesOnlyInA: string[];
  drivesOnlyInB: string[];
  routesOnlyInA: string[];
  routesOnlyInB: string[];
  identical: boolean;
}

export function driveKey(d: { cell: number; day: number }): string {
  return `cell ${d.cell} / day ${d.day}`;
}

export function routeKey(r: { day: number; bus: number; route_id: number }): string {
  return `day ${r.day} / bus ${r.bus} / route ${r.route_id}`;
}

const KINDS: (keyof InterventionCounts)[] = [
  "none", "phone_call", "travel_voucher", "bus_pickup", "vaccine_drive",
];

export function scenarioCompare(a: JobResult, b: JobResult): ScenarioDiff {
  const countDeltas = KINDS.map((kind) => ({
    kind,
    a: a.counts[kind],
    b: b.counts[kind],
    delta: b.counts[kind] - a.counts[kind],
  }));
  const drivesA = new Set(a.allocation.drives.map(driveKey));
  const drivesB = new Set(b.allocation.drives.map(driveKey));
  const routesA = new Set(a.allocation.routes.map(routeKey));
  const routesB = new Set(b.allocation.routes.map(routeKey));

  const only = (xs: Set<string>, ys: Set<string>) =>
    [...xs].filter((k) => !ys.has(k)).sort();

  const diff: ScenarioDiff = {
    objectiveDelta: b.objective - a.objective,
    costDeltaTenths: b.cost_tenths - a.cost_tenths,
    countDeltas,
    drivesOnlyInA: only(drivesA, drivesB),
    drivesOnlyInB: only(drivesB, drivesA),
    routesOnlyInA: only(routesA, routesB),
    routesOnlyInB: only(routesB, routesA),
    identical: false,
  };
  diff.identical =
    diff.objectiveDelta === 0 &&
    diff.costDeltaTenths === 0 &&
    diff.countDeltas.every((c) => c.delta === 0) &&
    diff.drivesOnlyInA.length === 0 &&
    diff.drivesOnlyInB.length === 0 &&
    diff.routesOnlyInA.length === 0 &&
    diff.routesOnlyInB.length === 0;
  return diff;
}
