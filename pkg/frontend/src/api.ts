/** Thin fetch wrapper over the control-plane API. The fetch function is
 * injectable so tests can run against an in-memory fixture server. */

import type {
  ActionName,
  AuditEntry,
  BudgetResponse,
  ComponentsResponse,
  DeployInfo,
  MetricsResponse,
  StagingReport,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorType: string,
    readonly detail: string,
  ) {
    super(detail);
  }
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike,
    private readonly actor: string = "operator-ui",
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.base + path, {
      method,
      headers: { "content-type": "application/json", "x-actor": this.actor },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let errorType = "HTTPError";
      let detail = `${response.status}`;
      try {
        const doc = (await response.json()) as { error?: string; detail?: string };
        errorType = doc.error ?? errorType;
        detail = doc.detail ?? detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, errorType, detail);
    }
    return (await response.json()) as T;
  }

  get<T>(path: string): Promise<T> {
    return this.request<T>("GET", path);
  }

  post<T>(path: string, body: unknown = {}): Promise<T> {
    return this.request<T>("POST", path, body);
  }

  components(): Promise<ComponentsResponse> {
    return this.get("/components");
  }

  deploys(componentId: string): Promise<{ deploys: DeployInfo[] }> {
    return this.get(`/components/${componentId}/deploys`);
  }

  metrics(deployId: string): Promise<MetricsResponse> {
    return this.get(`/metrics?deploy=${deployId}`);
  }

  budget(): Promise<BudgetResponse> {
    return this.get("/budget");
  }

  audit(n: number): Promise<{ entries: AuditEntry[] }> {
    return this.get(`/audit?n=${n}`);
  }

  stagingReport(): Promise<StagingReport> {
    return this.get("/staging/report");
  }

  /** One action, one API call. The server is the sole authority on effects. */
  dispatch(action: ActionName, target: string): Promise<unknown> {
    switch (action) {
      case "test":
        return this.post(`/deploys/${target}/test`);
      case "canary-1":
        return this.post(`/deploys/${target}/canary`, { percent: 1 });
      case "canary-10":
        return this.post(`/deploys/${target}/canary`, { percent: 10 });
      case "advance":
        return this.post(`/deploys/${target}/advance`);
      case "abort":
        return this.post(`/deploys/${target}/abort`);
      case "promote":
        return this.post(`/deploys/${target}/release`);
      case "rollback":
        return this.post(`/components/${target}/rollback`);
      case "clone-staging":
        return this.post("/staging/clone");
    }
  }
}
