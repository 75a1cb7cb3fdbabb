/** In-memory stand-in for the control plane: a fetch-compatible router over
 * mutable state, with a call log so tests can count exactly what the UI sent. */

import type { FetchLike } from "../src/api.js";
import type {
  AuditEntry,
  ComponentInfo,
  DeployInfo,
  MetricsResponse,
  StagingReport,
} from "../src/types.js";

export type RecordedCall = { method: string; path: string; body: unknown };

type FixtureState = {
  tick: number;
  components: ComponentInfo[];
  deploys: Record<string, DeployInfo[]>;
  metrics: Record<string, MetricsResponse>;
  audit: AuditEntry[];
  staging: StagingReport | null;
  budgetDepleted: boolean;
};

const failingVerdict = () => ({
  pass: false,
  reasons: ["error-rate-regression"],
  z_score: 7.2,
  canary: { n: 240, errors: 12, error_rate: 0.05, latency_quantile: 14 },
  baseline: { n: 2200, errors: 2, error_rate: 0.0009, latency_quantile: 13 },
});

export function canaryInTroubleState(): FixtureState {
  const deploy = (partial: Partial<DeployInfo> & { id: string; component: string }): DeployInfo => ({
    version: "v1",
    branch: "main",
    commit: "c0",
    state: "released",
    weight: 100,
    created_at: 0,
    test_status: "passed",
    marker: partial.id,
    retire_at: null,
    ...partial,
  });
  return {
    tick: 900,
    components: [
      {
        id: "gw",
        kind: "gateway",
        downstream: ["svc-a"],
        tables: [],
        released: "d2",
        rule: { component: "gw", version: 1, entries: [["d2", 100]] },
      },
      {
        id: "svc-a",
        kind: "mesh-service",
        downstream: [],
        tables: ["enrollments"],
        released: "d3",
        rule: { component: "svc-a", version: 4, entries: [["d3", 90], ["d7", 10]] },
      },
    ],
    deploys: {
      gw: [deploy({ id: "d2", component: "gw" })],
      "svc-a": [
        deploy({ id: "d3", component: "svc-a", weight: 90 }),
        deploy({ id: "d7", component: "svc-a", version: "v2", state: "canary", weight: 10 }),
      ],
    },
    metrics: {
      d7: {
        deploy: "d7",
        from_tick: 600,
        to_tick: 900,
        n: 240,
        errors: 12,
        error_rate: 0.05,
        p50: 11,
        p99: 14,
        verdict: failingVerdict(),
      },
    },
    audit: [
      { tick: 600, actor: "op", action: "canary.started", component: "svc-a", deploy: "d7", commit: "c1", detail: "percent=10" },
    ],
    staging: {
      report: { date: 1, tables: { enrollments: { rows: 3, offset: 1066801, transforms: {} } } },
      text: "staging clone for day 1",
    },
    budgetDepleted: false,
  };
}

export class FixtureServer {
  calls: RecordedCall[] = [];
  failNextPolls = 0; // make this many subsequent GETs fail (connection loss)

  constructor(public state: FixtureState = canaryInTroubleState()) {}

  callsTo(method: string, path: string): RecordedCall[] {
    return this.calls.filter((c) => c.method === method && c.path === path);
  }

  /** Applies the abort the way the real lifecycle does: single rule revision. */
  private abort(deployId: string): { status: number; body: unknown } {
    for (const deploys of Object.values(this.state.deploys)) {
      for (const d of deploys) {
        if (d.id !== deployId) continue;
        if (d.state !== "canary" && d.state !== "shifting") {
          return { status: 409, body: { error: "IllegalTransition", detail: `cannot abort a deploy in state ${d.state}` } };
        }
        d.state = "aborted";
        d.weight = 0;
        const component = this.state.components.find((c) => c.id === d.component)!;
        const released = component.released!;
        for (const other of this.state.deploys[d.component] ?? []) {
          if (other.id === released) other.weight = 100;
        }
        component.rule = {
          component: d.component,
          version: (component.rule?.version ?? 0) + 1,
          entries: [[released, 100]],
        };
        delete this.state.metrics[deployId];
        this.state.audit.push({
          tick: this.state.tick,
          actor: "op",
          action: "deploy.aborted",
          component: d.component,
          deploy: deployId,
          commit: d.commit,
          detail: "via=api",
        });
        return { status: 200, body: component.rule };
      }
    }
    return { status: 404, body: { error: "UnknownDeploy", detail: `no such deploy ${deployId}` } };
  }

  private route(method: string, path: string): { status: number; body: unknown } {
    const st = this.state;
    if (method === "GET" && path === "/components") {
      return { status: 200, body: { tick: st.tick, components: st.components } };
    }
    let match = path.match(/^\/components\/([^/]+)\/deploys$/);
    if (method === "GET" && match) {
      const id = match[1]!;
      if (!(id in st.deploys)) return { status: 404, body: { error: "UnknownComponent", detail: id } };
      return { status: 200, body: { deploys: st.deploys[id] } };
    }
    match = path.match(/^\/metrics\?deploy=(.+)$/);
    if (method === "GET" && match) {
      const metrics = st.metrics[match[1]!];
      if (!metrics) {
        return {
          status: 200,
          body: { deploy: match[1], from_tick: 0, to_tick: st.tick, n: 0, errors: 0, error_rate: 0, p50: 0, p99: 0 },
        };
      }
      return { status: 200, body: metrics };
    }
    if (method === "GET" && path === "/budget") {
      return {
        status: 200,
        body: {
          slo: "1999/2000", window_ticks: 2592000, allowed_error_ticks: 1296,
          allowed_error_minutes: 21.6, consumed_ticks: st.budgetDepleted ? 1400 : 60,
          consumed_minutes: st.budgetDepleted ? 23.3 : 1.0, depleted: st.budgetDepleted,
        },
      };
    }
    if (method === "GET" && path.startsWith("/audit")) {
      return { status: 200, body: { entries: st.audit } };
    }
    if (method === "GET" && path === "/staging/report") {
      if (!st.staging) return { status: 404, body: { error: "NotFound", detail: "no staging clone yet" } };
      return { status: 200, body: st.staging };
    }
    match = path.match(/^\/deploys\/([^/]+)\/abort$/);
    if (method === "POST" && match) {
      return this.abort(match[1]!);
    }
    match = path.match(/^\/deploys\/([^/]+)\/release$/);
    if (method === "POST" && match) {
      const id = match[1]!;
      const deploy = Object.values(st.deploys).flat().find((d) => d.id === id);
      if (deploy && deploy.weight !== 100) {
        return { status: 409, body: { error: "NotAtFullWeight", detail: `${id} is at weight ${deploy.weight} in state ${deploy.state}` } };
      }
      return { status: 200, body: deploy ?? {} };
    }
    if (method === "POST" && path === "/staging/clone") {
      return { status: 409, body: { error: "CloneInProgress", detail: "staging clone for day 1 already exists" } };
    }
    return { status: 404, body: { error: "NotFound", detail: path } };
  }

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.calls.push({ method, path, body });
    if (method === "GET" && this.failNextPolls > 0) {
      this.failNextPolls -= 1;
      throw new TypeError("fetch failed: connection refused");
    }
    const { status, body: doc } = this.route(method, path);
    return new Response(JSON.stringify(doc), {
      status,
      headers: { "content-type": "application/json" },
    });
  };
}
