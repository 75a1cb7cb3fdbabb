/** Snapshot -> HTML. Pure string rendering: the same snapshot always yields
 * the same markup, which keeps the dashboard trivially snapshot-testable. */

import type { Snapshot } from "./types.js";
import type { ActionButton } from "./views.js";
import { budgetView, canaryPanels, componentViews } from "./views.js";

function esc(value: unknown): string {
  return String(value)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function button(b: ActionButton): string {
  const disabled = b.enabled ? "" : " disabled";
  return (
    `<button class="action" data-action="${esc(b.action)}" data-target="${esc(b.target)}"${disabled}>` +
    `${esc(b.label)}</button>`
  );
}

function banner(snapshot: Snapshot): string {
  const parts: string[] = [];
  if (!snapshot.connected) {
    parts.push(`<div class="banner banner-stale" id="connection-banner">control plane unreachable; showing stale data</div>`);
  }
  if (snapshot.lastError) {
    parts.push(`<div class="banner banner-error" id="error-banner">${esc(snapshot.lastError)}` +
      `<button class="action" data-action-dismiss="1">dismiss</button></div>`);
  }
  return parts.join("");
}

function budgetSection(snapshot: Snapshot): string {
  const view = budgetView(snapshot);
  if (!view.available) return `<section id="budget"><h2>Error budget</h2><p>no data</p></section>`;
  const pct = (view.usedFraction * 100).toFixed(1);
  const cls = view.depleted ? "gauge depleted" : "gauge";
  return (
    `<section id="budget"><h2>Error budget</h2>` +
    `<div class="${cls}"><div class="gauge-fill" style="width:${pct}%"></div></div>` +
    `<p>${view.consumedMinutes.toFixed(2)} of ${view.allowedMinutes.toFixed(2)} error-minutes used` +
    `${view.depleted ? " — DEPLETED: high-risk changes blocked" : ""}</p></section>`
  );
}

function componentMap(snapshot: Snapshot): string {
  const views = componentViews(snapshot);
  const edges = views
    .flatMap((v) => v.downstream.map((d) => `<li>${esc(v.id)} &rarr; ${esc(d)}</li>`))
    .join("");
  const cards = views
    .map((v) => {
      const weights = v.ruleEntries
        .map(([deploy, weight]) => `<span class="weight">${esc(deploy)}:${weight}%</span>`)
        .join(" ");
      const badges = v.badges
        .map(
          (b) =>
            `<li class="badge state-${esc(b.state)}" data-deploy="${esc(b.id)}">` +
            `<code>${esc(b.id)}</code> ${esc(b.version)} <em>${esc(b.state)}</em>` +
            ` w=${b.weight} tests=${esc(b.testStatus)} ${b.buttons.map(button).join("")}</li>`,
        )
        .join("");
      return (
        `<article class="component" id="component-${esc(v.id)}">` +
        `<h3>${esc(v.id)} <small>${esc(v.kind)}</small></h3>` +
        `<p>release: <code>${esc(v.released ?? "none")}</code>` +
        ` rule v${esc(v.ruleVersion ?? "-")} (sum ${v.weightsSum}) ${weights} ${button(v.rollback)}</p>` +
        `<ul class="deploys">${badges}</ul></article>`
      );
    })
    .join("");
  return (
    `<section id="components"><h2>Components</h2>` +
    `<ul class="edges">${edges}</ul>${cards}</section>`
  );
}

function canarySection(snapshot: Snapshot): string {
  const panels = canaryPanels(snapshot);
  if (!panels.length) {
    return `<section id="canary"><h2>Canary</h2><p>no rollout in flight</p></section>`;
  }
  const body = panels
    .map((p) => {
      const v = p.verdict;
      const verdictCls = v.pass ? "verdict pass" : "verdict fail";
      const verdictText = v.pass ? "PASS" : `FAIL: ${v.reasons.join(", ")}`;
      return (
        `<article class="canary-panel" id="canary-${esc(p.deploy)}">` +
        `<h3>${esc(p.component)} &mdash; <code>${esc(p.deploy)}</code> ${esc(p.state)} at ${p.weight}%</h3>` +
        `<table><tr><th></th><th>canary</th><th>baseline</th></tr>` +
        `<tr><td>requests</td><td>${v.canary.n}</td><td>${v.baseline.n}</td></tr>` +
        `<tr><td>error rate</td><td>${(v.canary.error_rate * 100).toFixed(3)}%</td>` +
        `<td>${(v.baseline.error_rate * 100).toFixed(3)}%</td></tr>` +
        `<tr><td>latency q</td><td>${v.canary.latency_quantile.toFixed(1)}ms</td>` +
        `<td>${v.baseline.latency_quantile.toFixed(1)}ms</td></tr></table>` +
        `<p class="${verdictCls}" data-verdict="${v.pass ? "pass" : "fail"}">${esc(verdictText)}` +
        ` (z=${v.z_score.toFixed(2)})</p>` +
        `${button(p.advance)}${button(p.promote)}${button(p.abort)}</article>`
      );
    })
    .join("");
  return `<section id="canary"><h2>Canary</h2>${body}</section>`;
}

function stagingSection(snapshot: Snapshot): string {
  const cloneButton = button({ action: "clone-staging", target: "-", label: "Clone now", enabled: true });
  if (!snapshot.staging) {
    return `<section id="staging"><h2>Staging</h2><p>no staging clone yet</p>${cloneButton}</section>`;
  }
  const tables = Object.entries(snapshot.staging.report.tables)
    .map(
      ([name, info]) =>
        `<tr><td>${esc(name)}</td><td>${info.rows}</td><td>${info.offset}</td>` +
        `<td>${esc(Object.entries(info.transforms).map(([t, c]) => `${t}=${c}`).join(" "))}</td></tr>`,
    )
    .join("");
  return (
    `<section id="staging"><h2>Staging (day ${snapshot.staging.report.date})</h2>` +
    `<table><tr><th>table</th><th>rows</th><th>offset</th><th>transforms</th></tr>${tables}</table>` +
    `${cloneButton}</section>`
  );
}

function auditSection(snapshot: Snapshot): string {
  const rows = [...snapshot.audit]
    .reverse()
    .map(
      (e) =>
        `<tr><td>${e.tick}</td><td>${esc(e.actor)}</td><td>${esc(e.action)}</td>` +
        `<td>${esc(e.component)}</td><td>${esc(e.deploy)}</td><td>${esc(e.detail)}</td></tr>`,
    )
    .join("");
  return (
    `<section id="audit"><h2>Audit tail</h2>` +
    `<table><tr><th>tick</th><th>actor</th><th>action</th><th>component</th><th>deploy</th><th>detail</th></tr>` +
    `${rows}</table></section>`
  );
}

export function renderApp(snapshot: Snapshot): string {
  return (
    `<div class="app" data-tick="${snapshot.tick}">` +
    banner(snapshot) +
    budgetSection(snapshot) +
    componentMap(snapshot) +
    canarySection(snapshot) +
    stagingSection(snapshot) +
    auditSection(snapshot) +
    `</div>`
  );
}
