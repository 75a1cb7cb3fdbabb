"""Operator-facing JSON API over a loaded simulation.

Every mutating endpoint records the acting identity from the `x-actor`
header. Illegal lifecycle transitions surface as 409 conflicts; unknown
resources as 404; malformed input as 400. The desk-scale server holds one
simulation in process; mutations funnel through the lifecycle manager's
per-component serialization.
"""

from __future__ import annotations

from typing import Any, Dict, Optional

from fastapi import Body, FastAPI, Header, HTTPException, Query

from .audit import ACTION_SIMULATED, AuditEntry
from .budget import ErrorBudget
from .canary import CanaryVerdict
from .deploys import DeployRecord, DeployState, TrafficRule, VersionBehavior
from .errors import (
    AccessDenied,
    BadSignature,
    BudgetDepleted,
    CanaryPercentNotAllowed,
    CloneInProgress,
    HoldNotElapsed,
    IllegalTransition,
    InsufficientSamples,
    MeshSimError,
    MetricsRegression,
    NoLiveDeploy,
    NoPredecessor,
    NoStagingClone,
    NotAtFullWeight,
    NotMainBranch,
    NotTested,
    RolloutInFlight,
    ScheduleExhausted,
    SchemaViolation,
    UnknownComponent,
    UnknownDeploy,
    UnknownSuite,
    ValidationError,
)
from .harness import SuiteRun, TrafficProfile
from .pipeline import PipelineRun, run_pipeline
from .sim import Simulation

_CONFLICTS = (
    IllegalTransition,
    NotTested,
    NotMainBranch,
    NotAtFullWeight,
    NoPredecessor,
    RolloutInFlight,
    ScheduleExhausted,
    HoldNotElapsed,
    InsufficientSamples,
    BudgetDepleted,
    CloneInProgress,
    MetricsRegression,
    AccessDenied,
)
_NOT_FOUND = (UnknownComponent, UnknownDeploy, UnknownSuite, NoStagingClone)
_BAD_REQUEST = (ValidationError, SchemaViolation, BadSignature, CanaryPercentNotAllowed, NoLiveDeploy)


def _status_for(exc: MeshSimError) -> int:
    if isinstance(exc, _NOT_FOUND):
        return 404
    if isinstance(exc, _CONFLICTS):
        return 409
    if isinstance(exc, _BAD_REQUEST):
        return 400
    return 500


def _deploy_dict(record: DeployRecord) -> Dict[str, Any]:
    return {
        "id": record.id,
        "component": record.component,
        "version": record.version,
        "branch": record.branch,
        "commit": record.commit,
        "state": record.state.value,
        "weight": record.weight,
        "created_at": record.created_at,
        "test_status": record.test_status.value,
        "marker": record.behavior.marker,
        "retire_at": record.retire_at,
    }


def _rule_dict(rule: TrafficRule) -> Dict[str, Any]:
    return {"component": rule.component, "version": rule.version, "entries": [list(e) for e in rule.entries]}


def _suite_run_dict(run: SuiteRun) -> Dict[str, Any]:
    return {
        "suite": run.suite_id,
        "started_tick": run.started_tick,
        "pass_count": run.pass_count,
        "fail_count": run.fail_count,
        "production_write_delta": run.production_write_delta,
        "results": [
            {"test": r.test_id, "passed": r.passed, "failures": r.failures} for r in run.results
        ],
    }


def _verdict_dict(verdict: CanaryVerdict) -> Dict[str, Any]:
    return {
        "pass": verdict.passed,
        "reasons": verdict.reasons,
        "z_score": verdict.z_score,
        "canary": {
            "n": verdict.canary_stats.n,
            "errors": verdict.canary_stats.errors,
            "error_rate": verdict.canary_stats.error_rate,
            "latency_quantile": verdict.canary_stats.latency_quantile,
        },
        "baseline": {
            "n": verdict.baseline_stats.n,
            "errors": verdict.baseline_stats.errors,
            "error_rate": verdict.baseline_stats.error_rate,
            "latency_quantile": verdict.baseline_stats.latency_quantile,
        },
    }


def _budget_dict(budget: ErrorBudget) -> Dict[str, Any]:
    return {
        "slo": str(budget.slo),
        "window_ticks": budget.window_ticks,
        "allowed_error_ticks": float(budget.allowed_error_ticks),
        "allowed_error_minutes": float(budget.allowed_error_minutes),
        "consumed_ticks": budget.consumed_ticks,
        "consumed_minutes": float(budget.consumed_minutes),
        "depleted": budget.depleted,
    }


def _pipeline_dict(run: PipelineRun) -> Dict[str, Any]:
    return {
        "component": run.component,
        "deploy": run.deploy,
        "status": run.status,
        "released": run.released,
        "stages": [{"stage": s.stage, "ok": s.ok, "detail": s.detail} for s in run.stages],
    }


def _behavior_from(doc: Dict[str, Any]) -> VersionBehavior:
    testing_error = doc.get("testing_error_prob")
    return VersionBehavior(
        latency_mean=float(doc.get("latency_mean", 10.0)),
        latency_jitter=float(doc.get("latency_jitter", 0.0)),
        error_prob=float(doc.get("error_prob", 0.0)),
        marker=str(doc.get("marker", "")),
        testing_error_prob=None if testing_error is None else float(testing_error),
    )


def _entry_dict(entry: AuditEntry) -> Dict[str, Any]:
    return {
        "tick": entry.tick,
        "actor": entry.actor,
        "action": entry.action,
        "component": entry.component,
        "deploy": entry.deploy,
        "commit": entry.commit,
        "detail": entry.detail,
    }


def create_app(sim: Simulation) -> FastAPI:
    app = FastAPI(title="meshsim control plane", version="0.1.0")
    app.state.sim = sim

    @app.exception_handler(MeshSimError)
    async def _mesh_error(request, exc: MeshSimError):  # noqa: ANN001
        from fastapi.responses import JSONResponse

        return JSONResponse(
            status_code=_status_for(exc),
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    # -- reads ----------------------------------------------------------------

    @app.get("/components")
    def components() -> Dict[str, Any]:
        out = []
        for spec in sim.components.all():
            released = sim.registry.released(spec.id)
            try:
                rule = _rule_dict(sim.registry.rule(spec.id))
            except MeshSimError:
                rule = None
            out.append(
                {
                    "id": spec.id,
                    "kind": spec.kind.value,
                    "downstream": spec.downstream,
                    "tables": spec.tables,
                    "released": released.id if released else None,
                    "rule": rule,
                }
            )
        return {"tick": sim.clock.now, "components": out}

    @app.get("/components/{component_id}/deploys")
    def component_deploys(component_id: str) -> Dict[str, Any]:
        sim.components.get(component_id)
        return {"deploys": [_deploy_dict(d) for d in sim.registry.deploys_of(component_id)]}

    @app.get("/metrics")
    def metrics(deploy: str, from_tick: int = 0, to_tick: Optional[int] = None) -> Dict[str, Any]:
        record = sim.registry.get(deploy)
        end = sim.clock.now + 1 if to_tick is None else to_tick
        win = sim.metrics.window(deploy, from_tick, end)
        out: Dict[str, Any] = {
            "deploy": deploy,
            "from_tick": win.from_tick,
            "to_tick": win.to_tick,
            "n": win.n,
            "errors": win.errors,
            "error_rate": win.error_rate,
            "p50": win.latency_quantile(0.5),
            "p99": win.latency_quantile(0.99),
        }
        if record.state in (DeployState.CANARY, DeployState.SHIFTING):
            out["verdict"] = _verdict_dict(sim.lifecycle.evaluate(deploy))
        return out

    @app.get("/budget")
    def budget() -> Dict[str, Any]:
        return _budget_dict(sim.current_budget())

    @app.get("/audit")
    def audit(n: int = 50) -> Dict[str, Any]:
        return {"entries": [_entry_dict(e) for e in sim.audit.tail(n)]}

    @app.get("/staging/report")
    def staging_report() -> Dict[str, Any]:
        report = sim.staging.latest_report()
        if report is None:
            raise HTTPException(status_code=404, detail="no staging clone yet")
        return {"report": report.as_dict(), "text": report.render()}

    @app.get("/preview-url")
    def preview(deploys: str = Query(...)) -> Dict[str, Any]:
        ids = [d for d in deploys.split(",") if d]
        token = sim.preview(ids)
        return {"token": token, "url": f"/?route={token}"}

    # -- mutations --------------------------------------------------------------

    @app.post("/deploys")
    def create_deploy(
        body: Dict[str, Any] = Body(...),
        x_actor: str = Header(default="anonymous"),
    ) -> Dict[str, Any]:
        behavior = _behavior_from(body.get("behavior", {}))
        for key in ("component", "version", "branch", "commit"):
            if key not in body:
                raise ValidationError(f"body.{key}", "missing required field")
        record = sim.lifecycle.create_deploy(
            body["component"], body["version"], body["branch"], body["commit"], behavior, actor=x_actor
        )
        return _deploy_dict(record)

    @app.post("/deploys/{deploy_id}/test")
    def test_deploy(
        deploy_id: str,
        body: Dict[str, Any] = Body(default={}),
        x_actor: str = Header(default="anonymous"),
    ) -> Dict[str, Any]:
        record = sim.registry.get(deploy_id)
        suite_id = body.get("suite", "default")
        run = sim.run_suite(suite_id, overrides={record.component: deploy_id})
        sim.lifecycle.record_test_result(deploy_id, run, actor=x_actor)
        return {"deploy": _deploy_dict(record), "suite_run": _suite_run_dict(run)}

    @app.post("/deploys/{deploy_id}/canary")
    def start_canary(
        deploy_id: str,
        body: Dict[str, Any] = Body(...),
        x_actor: str = Header(default="anonymous"),
    ) -> Dict[str, Any]:
        if "percent" not in body:
            raise ValidationError("body.percent", "missing required field")
        rule = sim.lifecycle.start_canary(deploy_id, int(body["percent"]), actor=x_actor)
        return _rule_dict(rule)

    @app.post("/deploys/{deploy_id}/advance")
    def advance(deploy_id: str, x_actor: str = Header(default="anonymous")) -> Dict[str, Any]:
        rule = sim.lifecycle.advance_shift(deploy_id, actor=x_actor)
        return _rule_dict(rule)

    @app.post("/deploys/{deploy_id}/abort")
    def abort(deploy_id: str, x_actor: str = Header(default="anonymous")) -> Dict[str, Any]:
        rule = sim.lifecycle.abort(deploy_id, actor=x_actor, detail="via=api")
        return _rule_dict(rule)

    @app.post("/deploys/{deploy_id}/release")
    def release(
        deploy_id: str,
        body: Dict[str, Any] = Body(default={}),
        x_actor: str = Header(default="anonymous"),
    ) -> Dict[str, Any]:
        record = sim.lifecycle.finalize_release(deploy_id, actor=x_actor,
                                                retention_ticks=body.get("retention_ticks"))
        return _deploy_dict(record)

    @app.post("/components/{component_id}/rollback")
    def rollback(component_id: str, x_actor: str = Header(default="anonymous")) -> Dict[str, Any]:
        rule = sim.lifecycle.rollback(component_id, actor=x_actor)
        return _rule_dict(rule)

    @app.post("/staging/clone")
    def clone(
        body: Dict[str, Any] = Body(default={}),
        x_actor: str = Header(default="anonymous"),
    ) -> Dict[str, Any]:
        report = sim.clone_staging(date=body.get("date"), actor=x_actor)
        return {"report": report.as_dict(), "text": report.render()}

    @app.post("/simulate")
    def simulate(
        body: Dict[str, Any] = Body(default={}),
        x_actor: str = Header(default="anonymous"),
    ) -> Dict[str, Any]:
        ticks = int(body.get("ticks", 10))
        profile = TrafficProfile(
            rate=int(body.get("rate", 10)),
            mix=[tuple(m) for m in body.get("mix", [])],
            seed=int(body.get("seed", 0)),
        )
        windows = sim.run_traffic(profile, ticks)
        sim.audit.append(
            AuditEntry(sim.clock.now, x_actor, ACTION_SIMULATED, "", "", "",
                       f"ticks={ticks} rate={profile.rate}")
        )
        return {
            "tick": sim.clock.now,
            "windows": {
                d: {"n": w.n, "errors": w.errors, "error_rate": w.error_rate, "p99": w.latency_quantile(0.99)}
                for d, w in windows.items()
                if w.n
            },
        }

    @app.post("/pipeline")
    def pipeline(
        body: Dict[str, Any] = Body(...),
        x_actor: str = Header(default="anonymous"),
    ) -> Dict[str, Any]:
        for key in ("component", "version", "branch", "commit"):
            if key not in body:
                raise ValidationError(f"body.{key}", "missing required field")
        behavior = _behavior_from(body.get("behavior", {}))
        run = run_pipeline(
            sim,
            body["component"],
            body["version"],
            body["branch"],
            body["commit"],
            behavior,
            actor=x_actor,
            suite_id=body.get("suite", "default"),
            percent=body.get("percent"),
        )
        return _pipeline_dict(run)

    @app.post("/requests")
    def issue_request(body: Dict[str, Any] = Body(default={})) -> Dict[str, Any]:
        """Send one request through the mesh (optionally with a wire annotation)."""
        response, trace = sim.issue_request(wire=body.get("annotation"), entry=body.get("entry"))
        return {
            "status": response.status,
            "markers": response.markers,
            "error_component": response.error_component,
            "trace": [
                {"component": h.component, "deploy": h.deploy, "store": h.store_used, "outcome": h.outcome}
                for h in trace.hops
            ],
        }

    return app


def serve(sim: Simulation, host: str = "127.0.0.1", port: int = 8080) -> None:
    import uvicorn

    uvicorn.run(create_app(sim), host=host, port=port, log_level="warning")
