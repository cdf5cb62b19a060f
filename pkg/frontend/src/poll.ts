/** Job polling and input debouncing. */

import type { ApiClient } from "./api.js";
import type { PlanJob } from "./types.js";

export interface PollOptions {
  intervalMs?: number;
  maxAttempts?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/** Poll until the job reaches a terminal state; one request in flight. */
export async function pollJob(
  client: ApiClient,
  jobId: string,
  onUpdate: (job: PlanJob) => void,
  options: PollOptions = {},
): Promise<PlanJob> {
  const interval = options.intervalMs ?? 1000;
  const maxAttempts = options.maxAttempts ?? 3600;
  const sleep = options.sleep ?? defaultSleep;
  for (let attempt = 0; attempt < maxAttempts; attempt++) {
    const job = await client.getPlan(jobId);
    onUpdate(job);
    if (job.state === "done" || job.state === "failed") {
      return job;
    }
    await sleep(interval);
  }
  throw new Error(`job ${jobId} still running after ${maxAttempts} polls`);
}

/** Trailing-edge debounce; slider chatter collapses to one call. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
  timers: { set: typeof setTimeout; clear: typeof clearTimeout } = {
    set: setTimeout,
    clear: clearTimeout,
  },
): (...args: A) => void {
  let handle: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (handle !== undefined) {
      timers.clear(handle);
    }
    handle = timers.set(() => fn(...args), waitMs);
  };
}
