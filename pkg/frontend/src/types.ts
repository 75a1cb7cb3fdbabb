/** Payload shapes of the control-plane JSON API the dashboard consumes. */

export type DeployState =
  | "preproduction"
  | "testing"
  | "tested"
  | "test-failed"
  | "canary"
  | "shifting"
  | "released"
  | "aborted"
  | "retired";

export type RuleInfo = {
  component: string;
  version: number;
  entries: [string, number][];
};

export type ComponentInfo = {
  id: string;
  kind: string;
  downstream: string[];
  tables: string[];
  released: string | null;
  rule: RuleInfo | null;
};

export type ComponentsResponse = {
  tick: number;
  components: ComponentInfo[];
};

export type DeployInfo = {
  id: string;
  component: string;
  version: string;
  branch: string;
  commit: string;
  state: DeployState;
  weight: number;
  created_at: number;
  test_status: "untested" | "passed" | "failed";
  marker: string;
  retire_at: number | null;
};

export type VerdictSide = {
  n: number;
  errors: number;
  error_rate: number;
  latency_quantile: number;
};

export type Verdict = {
  pass: boolean;
  reasons: string[];
  z_score: number;
  canary: VerdictSide;
  baseline: VerdictSide;
};

export type MetricsResponse = {
  deploy: string;
  from_tick: number;
  to_tick: number;
  n: number;
  errors: number;
  error_rate: number;
  p50: number;
  p99: number;
  verdict?: Verdict;
};

export type BudgetResponse = {
  slo: string;
  window_ticks: number;
  allowed_error_ticks: number;
  allowed_error_minutes: number;
  consumed_ticks: number;
  consumed_minutes: number;
  depleted: boolean;
};

export type AuditEntry = {
  tick: number;
  actor: string;
  action: string;
  component: string;
  deploy: string;
  commit: string;
  detail: string;
};

export type StagingReport = {
  report: {
    date: number;
    tables: Record<string, { rows: number; offset: number; transforms: Record<string, number> }>;
  };
  text: string;
};

/** Everything one poll gathers. Stale fields survive a failed poll. */
export type Snapshot = {
  connected: boolean;
  tick: number;
  components: ComponentInfo[];
  deploys: Record<string, DeployInfo[]>;
  metrics: Record<string, MetricsResponse>;
  budget: BudgetResponse | null;
  audit: AuditEntry[];
  staging: StagingReport | null;
  lastError: string | null;
};

export const emptySnapshot = (): Snapshot => ({
  connected: false,
  tick: 0,
  components: [],
  deploys: {},
  metrics: {},
  budget: null,
  audit: [],
  staging: null,
  lastError: null,
});

export type ActionName =
  | "test"
  | "canary-1"
  | "canary-10"
  | "advance"
  | "abort"
  | "promote"
  | "rollback"
  | "clone-staging";
