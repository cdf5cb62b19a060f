/** Thin typed client over the planning service endpoints. */

import type {
  AllocationPayload,
  ApiErrorBody,
  InstanceFull,
  InstanceSummary,
  PlanJob,
  PlanOverrides,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, init);
    const body = await res.json();
    if (!res.ok) {
      throw new ApiError(res.status, body as ApiErrorBody);
    }
    return body as T;
  }

  uploadInstance(files: {
    mothersCsv: string;
    centersCsv: string;
    depotsCsv: string;
    config: object;
  }): Promise<{ instance_id: string; mothers: number }> {
    return this.request("/instances", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        mothers_csv: files.mothersCsv,
        centers_csv: files.centersCsv,
        depots_csv: files.depotsCsv,
        config: files.config,
      }),
    });
  }

  listInstances(): Promise<{ instances: string[] }> {
    return this.request("/instances");
  }

  getInstance(id: string): Promise<InstanceSummary> {
    return this.request(`/instances/${id}`);
  }

  getInstanceFull(id: string): Promise<InstanceFull> {
    return this.request(`/instances/${id}/full`);
  }

  submitPlan(instanceId: string, overrides: PlanOverrides): Promise<PlanJob> {
    return this.request("/plans", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ instance_id: instanceId, overrides }),
    });
  }

  getPlan(jobId: string): Promise<PlanJob> {
    return this.request(`/plans/${jobId}`);
  }

  getAllocation(jobId: string): Promise<AllocationPayload> {
    return this.request(`/plans/${jobId}/allocation`);
  }

  whatIf(instanceId: string, overrides: PlanOverrides): Promise<PlanJob> {
    return this.request("/whatif", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ instance_id: instanceId, overrides }),
    });
  }
}
