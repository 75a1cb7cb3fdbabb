/** Pure view models. Everything here derives from the snapshot alone: no
 * client-side state machine, no inference beyond what the API reported.
 * Button gating mirrors the server's gates so a disabled button is one the
 * server would reject; the server stays the sole authority either way. */

import type {
  ActionName,
  ComponentInfo,
  DeployInfo,
  Snapshot,
  Verdict,
} from "./types.js";

export type ActionButton = {
  action: ActionName;
  target: string;
  label: string;
  enabled: boolean;
};

export type DeployBadge = {
  id: string;
  version: string;
  state: string;
  weight: number;
  testStatus: string;
  branch: string;
  buttons: ActionButton[];
};

export type ComponentView = {
  id: string;
  kind: string;
  released: string | null;
  ruleVersion: number | null;
  ruleEntries: [string, number][];
  weightsSum: number;
  downstream: string[];
  badges: DeployBadge[];
  rollback: ActionButton;
};

export type CanaryPanelView = {
  deploy: string;
  component: string;
  state: string;
  weight: number;
  verdict: Verdict;
  promote: ActionButton;
  abort: ActionButton;
  advance: ActionButton;
};

const IN_FLIGHT = new Set(["canary", "shifting"]);

function deployButtons(deploy: DeployInfo): ActionButton[] {
  const testable = ["preproduction", "testing", "aborted"].includes(deploy.state);
  const canaryReady = deploy.state === "tested" && deploy.branch === "main";
  return [
    { action: "test", target: deploy.id, label: "Test", enabled: testable },
    { action: "canary-1", target: deploy.id, label: "Canary 1%", enabled: canaryReady },
    { action: "canary-10", target: deploy.id, label: "Canary 10%", enabled: canaryReady },
  ];
}

export function componentViews(snapshot: Snapshot): ComponentView[] {
  return snapshot.components.map((component: ComponentInfo) => {
    const deploys = snapshot.deploys[component.id] ?? [];
    const entries = component.rule?.entries ?? [];
    return {
      id: component.id,
      kind: component.kind,
      released: component.released,
      ruleVersion: component.rule?.version ?? null,
      ruleEntries: entries,
      weightsSum: entries.reduce((sum, [, weight]) => sum + weight, 0),
      downstream: component.downstream,
      badges: deploys
        .filter((d) => d.state !== "retired")
        .map((d) => ({
          id: d.id,
          version: d.version,
          state: d.state,
          weight: d.weight,
          testStatus: d.test_status,
          branch: d.branch,
          buttons: deployButtons(d),
        })),
      rollback: {
        action: "rollback",
        target: component.id,
        label: "Rollback",
        enabled: true, // predecessor existence is only known server-side
      },
    };
  });
}

export function canaryPanels(snapshot: Snapshot): CanaryPanelView[] {
  const panels: CanaryPanelView[] = [];
  for (const deploys of Object.values(snapshot.deploys)) {
    for (const deploy of deploys) {
      if (!IN_FLIGHT.has(deploy.state)) continue;
      const verdict = snapshot.metrics[deploy.id]?.verdict;
      if (!verdict) continue;
      panels.push({
        deploy: deploy.id,
        component: deploy.component,
        state: deploy.state,
        weight: deploy.weight,
        verdict,
        promote: {
          action: "promote",
          target: deploy.id,
          label: "Promote",
          // only when the API reports a passing verdict, and at full weight
          enabled: verdict.pass && deploy.weight === 100 && deploy.state === "shifting",
        },
        abort: {
          action: "abort",
          target: deploy.id,
          label: "Abort",
          enabled: true, // always available while in canary/shifting
        },
        advance: {
          action: "advance",
          target: deploy.id,
          label: "Advance",
          enabled: verdict.pass && deploy.weight < 100,
        },
      });
    }
  }
  return panels.sort((a, b) => a.deploy.localeCompare(b.deploy));
}

export type BudgetView = {
  available: boolean;
  allowedMinutes: number;
  consumedMinutes: number;
  usedFraction: number;
  depleted: boolean;
};

export function budgetView(snapshot: Snapshot): BudgetView {
  const budget = snapshot.budget;
  if (!budget) {
    return { available: false, allowedMinutes: 0, consumedMinutes: 0, usedFraction: 0, depleted: false };
  }
  const used = budget.allowed_error_minutes > 0
    ? Math.min(1, budget.consumed_minutes / budget.allowed_error_minutes)
    : 0;
  return {
    available: true,
    allowedMinutes: budget.allowed_error_minutes,
    consumedMinutes: budget.consumed_minutes,
    usedFraction: used,
    depleted: budget.depleted,
  };
}
