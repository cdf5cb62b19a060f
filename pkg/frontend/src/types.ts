/** Payload shapes of the planning service API. */

export type JobState = "queued" | "running" | "done" | "failed";

export interface InterventionCounts {
  none: number;
  phone_call: number;
  travel_voucher: number;
  bus_pickup: number;
  vaccine_drive: number;
}

export interface PlanOverrides {
  budget_units?: number;
  budget_tenths?: number;
  drive_cap?: number | null;
  fleet_size?: number;
  method?: "adviser" | "hilp" | "rwb";
}

export interface AssignmentRow {
  mother: number;
  kind: keyof InterventionCounts;
  day: number | null;
  cell: number | null;
  bus: number | null;
  route_id: number | null;
}

export interface DriveRow {
  cell: number;
  day: number;
  mothers: number[];
}

export interface RouteNode {
  kind: "depot" | "pickup" | "dropoff";
  ref_id: number;
  lat: number;
  lon: number;
  earliest: number;
  latest: number;
}

export interface RouteRow {
  day: number;
  bus: number;
  route_id: number;
  mothers: number[];
  nodes?: RouteNode[];
  arrivals?: number[];
}

export interface AllocationPayload {
  objective: number;
  cost_tenths: number;
  counts: InterventionCounts;
  assignments: AssignmentRow[];
  drives: DriveRow[];
  routes: RouteRow[];
}

export interface JobResult {
  method: string;
  budget_tenths: number;
  objective: number;
  cost_tenths: number;
  counts: InterventionCounts;
  solver: { status: string; gap: number } | null;
  allocation: AllocationPayload;
}

export interface PlanJob {
  job_id: string;
  instance_id: string;
  overrides: PlanOverrides;
  state: JobState;
  error: string | null;
  result: JobResult | null;
}

export interface InstanceSummary {
  instance_id: string;
  mothers: number;
  centers: number;
  depots: number;
  horizon: number;
  budget_tenths: number;
  drive_cap: number | null;
  fleet_size: number;
  grid: GridSpec;
}

export interface GridSpec {
  lat_min: number;
  lat_max: number;
  lon_min: number;
  lon_max: number;
  cell_size_km: number;
}

export interface InstanceFull {
  horizon: number;
  budget_tenths: number;
  grid: GridSpec;
  mothers: { id: number; lat: number; lon: number }[];
  centers: { id: number; lat: number; lon: number; depot_id: number }[];
  depots: { id: number; lat: number; lon: number }[];
  fleet: { capacity: number; buses: { id: number; depot_id: number }[] };
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail?: unknown;
}
