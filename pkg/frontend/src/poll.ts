/** Poll loop: each cycle rebuilds the snapshot from GET endpoints only.
 * A failed poll keeps the stale data and drops the connected flag; the UI
 * never invents state between polls. */

import { ApiClient, ApiError } from "./api.js";
import type { DeployInfo, MetricsResponse, Snapshot } from "./types.js";
import { emptySnapshot } from "./types.js";

export type Listener = (snapshot: Snapshot) => void;

export class Store {
  private snapshot: Snapshot = emptySnapshot();
  private listeners: Listener[] = [];

  get(): Snapshot {
    return this.snapshot;
  }

  set(snapshot: Snapshot): void {
    this.snapshot = snapshot;
    for (const listener of this.listeners) listener(snapshot);
  }

  setError(message: string | null): void {
    this.set({ ...this.snapshot, lastError: message });
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}

const WATCH_STATES = new Set(["canary", "shifting"]);

export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly store: Store,
    readonly intervalMs: number = 1000,
  ) {}

  start(): void {
    if (this.timer !== null) return;
    void this.poll();
    this.timer = setInterval(() => void this.poll(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** One full refresh. Safe to call directly (tests drive polls manually). */
  async poll(): Promise<Snapshot> {
    const previous = this.store.get();
    try {
      const componentsResponse = await this.client.components();
      const deploys: Record<string, DeployInfo[]> = {};
      const metrics: Record<string, MetricsResponse> = {};
      for (const component of componentsResponse.components) {
        const listing = await this.client.deploys(component.id);
        deploys[component.id] = listing.deploys;
        for (const deploy of listing.deploys) {
          if (WATCH_STATES.has(deploy.state)) {
            metrics[deploy.id] = await this.client.metrics(deploy.id);
          }
        }
      }
      const budget = await this.client.budget();
      const audit = (await this.client.audit(25)).entries;
      let staging = previous.staging;
      try {
        staging = await this.client.stagingReport();
      } catch (error) {
        if (error instanceof ApiError && error.status === 404) {
          staging = null; // no clone yet: a state, not a failure
        } else {
          throw error;
        }
      }
      const next: Snapshot = {
        connected: true,
        tick: componentsResponse.tick,
        components: componentsResponse.components,
        deploys,
        metrics,
        budget,
        audit,
        staging,
        lastError: previous.lastError,
      };
      this.store.set(next);
      return next;
    } catch {
      const stale: Snapshot = { ...previous, connected: false };
      this.store.set(stale);
      return stale;
    }
  }
}
