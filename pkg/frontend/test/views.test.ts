import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { Poller, Store } from "../src/poll.js";
import { renderApp } from "../src/render.js";
import type { Snapshot } from "../src/types.js";
import { budgetView, canaryPanels, componentViews } from "../src/views.js";
import { FixtureServer } from "./fixture.js";

async function snapshotFromFixture(server = new FixtureServer()): Promise<Snapshot> {
  const client = new ApiClient("http://fixture", server.fetch);
  const store = new Store();
  const poller = new Poller(client, store, 1000);
  return poller.poll();
}

describe("component views", () => {
  it("shows weights that sum to 100", async () => {
    const snapshot = await snapshotFromFixture();
    for (const view of componentViews(snapshot)) {
      expect(view.weightsSum).toBe(100);
    }
  });

  it("derives badges only from API data", async () => {
    const snapshot = await snapshotFromFixture();
    const svcA = componentViews(snapshot).find((v) => v.id === "svc-a")!;
    const byId = Object.fromEntries(svcA.badges.map((b) => [b.id, b]));
    expect(byId["d3"]!.state).toBe("released");
    expect(byId["d7"]!.state).toBe("canary");
    expect(byId["d7"]!.weight).toBe(10);
    expect(svcA.ruleVersion).toBe(4);
  });
});

describe("canary panel gating", () => {
  it("disables promote while the verdict fails; abort stays enabled", async () => {
    const snapshot = await snapshotFromFixture();
    const [panel] = canaryPanels(snapshot);
    expect(panel!.verdict.pass).toBe(false);
    expect(panel!.promote.enabled).toBe(false);
    expect(panel!.abort.enabled).toBe(true);
    expect(panel!.advance.enabled).toBe(false);
  });

  it("enables promote only at full weight with a passing verdict", async () => {
    const server = new FixtureServer();
    const deploy = server.state.deploys["svc-a"]!.find((d) => d.id === "d7")!;
    deploy.state = "shifting";
    deploy.weight = 100;
    server.state.metrics["d7"]!.verdict = {
      pass: true,
      reasons: [],
      z_score: 0.2,
      canary: { n: 2400, errors: 2, error_rate: 0.0008, latency_quantile: 13 },
      baseline: { n: 2200, errors: 2, error_rate: 0.0009, latency_quantile: 13 },
    };
    const snapshot = await snapshotFromFixture(server);
    const [panel] = canaryPanels(snapshot);
    expect(panel!.promote.enabled).toBe(true);
    expect(panel!.advance.enabled).toBe(false); // already at 100
    expect(panel!.abort.enabled).toBe(true);
  });
});

describe("budget gauge", () => {
  it("reports consumption against the allowance", async () => {
    const snapshot = await snapshotFromFixture();
    const view = budgetView(snapshot);
    expect(view.available).toBe(true);
    expect(view.allowedMinutes).toBeCloseTo(21.6);
    expect(view.depleted).toBe(false);
  });
});

describe("rendering", () => {
  it("is deterministic for a given snapshot", async () => {
    const snapshot = await snapshotFromFixture();
    expect(renderApp(snapshot)).toBe(renderApp(snapshot));
  });

  it("escapes server-supplied text", async () => {
    const server = new FixtureServer();
    server.state.audit.push({
      tick: 1, actor: "<img>", action: "deploy.created", component: "svc-a",
      deploy: "d9", commit: "c", detail: "<script>alert(1)</script>",
    });
    const snapshot = await snapshotFromFixture(server);
    const html = renderApp(snapshot);
    expect(html).not.toContain("<script>alert(1)</script>");
    expect(html).toContain("&lt;script&gt;");
  });
});
