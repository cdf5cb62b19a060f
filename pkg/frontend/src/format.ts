/** Rendering helpers.
 *
 * Every figure shown in a panel comes verbatim from a service response
 * field; nothing is recomputed client-side (money stays in tenths until
 * the final display step, which only moves the decimal point).
 */

import type { InterventionCounts, JobResult } from "./types.js";

export function formatMoneyTenths(tenths: number): string {
  const sign = tenths < 0 ? "-" : "";
  const abs = Math.abs(tenths);
  return `${sign}$${Math.floor(abs / 10)}.${abs % 10}`;
}

export function formatObjective(objective: number): string {
  return objective.toFixed(2);
}

export const KIND_LABELS: Record<keyof InterventionCounts, string> = {
  none: "No intervention",
  phone_call: "Phone calls",
  travel_voucher: "Travel vouchers",
  bus_pickup: "Bus pickups",
  vaccine_drive: "Vaccine drives",
};

export interface ScenarioSummaryView {
  objective: string;
  cost: string;
  counts: { kind: keyof InterventionCounts; label: string; value: number }[];
  method: string;
  solverStatus: string | null;
}

export function summarizeResult(result: JobResult): ScenarioSummaryView {
  return {
    objective: formatObjective(result.objective),
    cost: formatMoneyTenths(result.cost_tenths),
    counts: (Object.keys(KIND_LABELS) as (keyof InterventionCounts)[]).map((kind) => ({
      kind,
      label: KIND_LABELS[kind],
      value: result.counts[kind],
    })),
    method: result.method,
    solverStatus: result.solver ? result.solver.status : null,
  };
}
