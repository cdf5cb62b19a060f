/** One scenario panel: slider config, explicit submission, polling state. */

import type { ApiClient } from "./api.js";
import { pollJob } from "./poll.js";
import type { PlanJob, PlanOverrides } from "./types.js";

export type PanelPhase = "idle" | "submitting" | "polling" | "done" | "failed";

export interface PanelState {
  phase: PanelPhase;
  pending: PlanOverrides;
  job: PlanJob | null;
  error: string | null;
}

export class ScenarioPanel {
  state: PanelState = { phase: "idle", pending: {}, job: null, error: null };
  private inFlight = false;

  constructor(
    private client: ApiClient,
    private instanceId: string,
    private onChange: (state: PanelState) => void,
    private pollIntervalMs = 1000,
  ) {}

  /** Slider updates only stage configuration; nothing is submitted. */
  setPending(overrides: PlanOverrides): void {
    this.state = { ...this.state, pending: { ...this.state.pending, ...overrides } };
    this.onChange(this.state);
  }

  /** Explicit "Plan" action: the only path that creates a job. */
  async plan(): Promise<PlanJob | null> {
    if (this.inFlight) {
      return null; // one submission per panel at a time
    }
    this.inFlight = true;
    this.state = { ...this.state, phase: "submitting", error: null };
    this.onChange(this.state);
    try {
      const job = await this.client.submitPlan(this.instanceId, this.state.pending);
      this.state = { ...this.state, phase: "polling", job };
      this.onChange(this.state);
      const final = await pollJob(this.client, job.job_id, (update) => {
        this.state = { ...this.state, job: update };
        this.onChange(this.state);
      }, { intervalMs: this.pollIntervalMs });
      this.state = {
        ...this.state,
        phase: final.state === "done" ? "done" : "failed",
        job: final,
        error: final.error,
      };
      this.onChange(this.state);
      return final;
    } catch (err) {
      this.state = { ...this.state, phase: "failed", error: String(err) };
      this.onChange(this.state);
      return null;
    } finally {
      this.inFlight = false;
    }
  }
}
