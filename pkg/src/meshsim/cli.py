"""Command-line control plane.

Each subcommand maps 1:1 onto an API call. With --api the command drives a
running server; otherwise it loads the scenario and runs in process (one-shot,
useful for pipeline/simulate/clone/status). Errors print as JSON on stderr
and exit nonzero; `pipeline` exits 0 only when the run released.
"""

from __future__ import annotations

import argparse
import json
import sys
import urllib.error
import urllib.request
from typing import Any, Dict, Optional

from .deploys import VersionBehavior
from .errors import MeshSimError
from .harness import TrafficProfile
from .pipeline import run_pipeline
from .scenario import load_scenario, load_default_scenario, build_simulation
from .sim import Simulation


def _behavior_from_args(args: argparse.Namespace) -> VersionBehavior:
    return VersionBehavior(
        latency_mean=args.latency_mean,
        latency_jitter=args.latency_jitter,
        error_prob=args.error_prob,
        marker=args.marker or f"{args.component}-{args.version}",
        testing_error_prob=args.testing_error_prob,
    )


def _behavior_body(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "latency_mean": args.latency_mean,
        "latency_jitter": args.latency_jitter,
        "error_prob": args.error_prob,
        "marker": args.marker or f"{args.component}-{args.version}",
        "testing_error_prob": args.testing_error_prob,
    }


def _call_api(base: str, method: str, path: str, body: Optional[Dict] = None, actor: str = "cli") -> Dict:
    url = base.rstrip("/") + path
    data = json.dumps(body or {}).encode() if method != "GET" else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"content-type": "application/json", "x-actor": actor})
    try:
        with urllib.request.urlopen(req) as resp:
            return json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        payload = exc.read().decode()
        try:
            doc = json.loads(payload)
        except json.JSONDecodeError:
            doc = {"error": "HTTPError", "detail": payload}
        raise SystemExitError(doc)


class SystemExitError(Exception):
    def __init__(self, doc: Dict):
        super().__init__(doc.get("detail", "error"))
        self.doc = doc


def _load_sim(args: argparse.Namespace) -> Simulation:
    config = load_scenario(args.scenario) if args.scenario else load_default_scenario()
    if args.seed is not None:
        config.seed = args.seed
    sim = build_simulation(config, audit_path=args.audit_log)
    return sim


def _emit(doc: Any) -> None:
    print(json.dumps(doc, indent=2, default=str))


def _fail(error: str, detail: str, code: int = 1) -> int:
    print(json.dumps({"error": error, "detail": detail}), file=sys.stderr)
    return code


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(prog="meshsim", description="service-mesh release simulator")
    parser.add_argument("--scenario", help="scenario YAML (default: packaged default scenario)")
    parser.add_argument("--seed", type=int, help="override the scenario master seed")
    parser.add_argument("--api", help="drive a running control-plane server at this base URL")
    parser.add_argument("--actor", default="cli", help="identity recorded in the audit trail")
    parser.add_argument("--audit-log", help="append audit entries to this file (local mode)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deploy", help="create a preproduction deploy")
    p.add_argument("--component", required=True)
    p.add_argument("--version", required=True)
    p.add_argument("--branch", default="main")
    p.add_argument("--commit", default="")
    p.add_argument("--latency-mean", type=float, default=10.0)
    p.add_argument("--latency-jitter", type=float, default=0.0)
    p.add_argument("--error-prob", type=float, default=0.0)
    p.add_argument("--testing-error-prob", type=float, default=None)
    p.add_argument("--marker", default="")

    p = sub.add_parser("test", help="run the integration suite against a deploy")
    p.add_argument("--deploy", required=True)
    p.add_argument("--suite", default="default")

    p = sub.add_parser("canary", help="start a canary")
    p.add_argument("--deploy", required=True)
    p.add_argument("--percent", type=int, default=10)

    p = sub.add_parser("advance", help="advance blue-green shifting one step")
    p.add_argument("--deploy", required=True)

    p = sub.add_parser("abort", help="abort a canary/shift; old release back to 100%%")
    p.add_argument("--deploy", required=True)

    p = sub.add_parser("promote", help="finalize a fully-shifted deploy as the release")
    p.add_argument("--deploy", required=True)
    p.add_argument("--retention-ticks", type=int)

    p = sub.add_parser("rollback", help="restore the predecessor release to 100%%")
    p.add_argument("--component", required=True)

    p = sub.add_parser("clone-staging", help="clone production into a fresh staging database")
    p.add_argument("--date", type=int)

    sub.add_parser("status", help="components, releases, and rules")

    p = sub.add_parser("simulate", help="generate production traffic")
    p.add_argument("--rate", type=int, default=10)
    p.add_argument("--ticks", type=int, default=10)

    p = sub.add_parser("pipeline", help="run the full 8-step upgrade pipeline")
    p.add_argument("--component", required=True)
    p.add_argument("--version", required=True)
    p.add_argument("--branch", default="main")
    p.add_argument("--commit", default="")
    p.add_argument("--percent", type=int)
    p.add_argument("--suite", default="default")
    p.add_argument("--latency-mean", type=float, default=10.0)
    p.add_argument("--latency-jitter", type=float, default=0.0)
    p.add_argument("--error-prob", type=float, default=0.0)
    p.add_argument("--testing-error-prob", type=float, default=None)
    p.add_argument("--marker", default="")

    p = sub.add_parser("preview-url", help="signed token routing at the given deploys")
    p.add_argument("--deploys", required=True, help="comma-separated deploy ids")

    p = sub.add_parser("serve", help="run the control-plane API server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)

    args = parser.parse_args(argv)

    try:
        if args.api:
            return _run_remote(args)
        return _run_local(args)
    except SystemExitError as exc:
        print(json.dumps(exc.doc), file=sys.stderr)
        return 1
    except MeshSimError as exc:
        return _fail(type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail("OSError", str(exc))


def _run_remote(args: argparse.Namespace) -> int:
    base, actor = args.api, args.actor
    cmd = args.command
    if cmd == "deploy":
        doc = _call_api(base, "POST", "/deploys", {
            "component": args.component, "version": args.version, "branch": args.branch,
            "commit": args.commit, "behavior": _behavior_body(args)}, actor)
    elif cmd == "test":
        doc = _call_api(base, "POST", f"/deploys/{args.deploy}/test", {"suite": args.suite}, actor)
    elif cmd == "canary":
        doc = _call_api(base, "POST", f"/deploys/{args.deploy}/canary", {"percent": args.percent}, actor)
    elif cmd == "advance":
        doc = _call_api(base, "POST", f"/deploys/{args.deploy}/advance", {}, actor)
    elif cmd == "abort":
        doc = _call_api(base, "POST", f"/deploys/{args.deploy}/abort", {}, actor)
    elif cmd == "promote":
        body = {"retention_ticks": args.retention_ticks} if args.retention_ticks is not None else {}
        doc = _call_api(base, "POST", f"/deploys/{args.deploy}/release", body, actor)
    elif cmd == "rollback":
        doc = _call_api(base, "POST", f"/components/{args.component}/rollback", {}, actor)
    elif cmd == "clone-staging":
        body = {"date": args.date} if args.date is not None else {}
        doc = _call_api(base, "POST", "/staging/clone", body, actor)
        print(doc.get("text", ""))
        return 0
    elif cmd == "status":
        doc = _call_api(base, "GET", "/components")
    elif cmd == "simulate":
        doc = _call_api(base, "POST", "/simulate", {"rate": args.rate, "ticks": args.ticks}, actor)
    elif cmd == "pipeline":
        doc = _call_api(base, "POST", "/pipeline", {
            "component": args.component, "version": args.version, "branch": args.branch,
            "commit": args.commit, "behavior": _behavior_body(args),
            "percent": args.percent, "suite": args.suite}, actor)
        _emit(doc)
        return 0 if doc.get("released") else 2
    elif cmd == "preview-url":
        doc = _call_api(base, "GET", f"/preview-url?deploys={args.deploys}")
    else:
        return _fail("UnknownCommand", f"'{cmd}' cannot run remotely")
    _emit(doc)
    return 0


def _run_local(args: argparse.Namespace) -> int:
    if args.command == "serve":
        from .api import serve

        sim = _load_sim(args)
        sim.clone_staging(actor="startup")
        print(f"serving control plane on http://{args.host}:{args.port}", file=sys.stderr)
        serve(sim, host=args.host, port=args.port)
        return 0

    sim = _load_sim(args)
    cmd = args.command

    if cmd == "deploy":
        record = sim.lifecycle.create_deploy(
            args.component, args.version, args.branch, args.commit, _behavior_from_args(args), actor=args.actor
        )
        print(record.id)
        return 0
    if cmd == "test":
        record = sim.registry.get(args.deploy)
        sim.clone_staging(actor=args.actor)
        run = sim.run_suite(args.suite, overrides={record.component: args.deploy})
        sim.lifecycle.record_test_result(args.deploy, run, actor=args.actor)
        _emit({"deploy": args.deploy, "state": record.state.value,
               "passed": run.pass_count, "failed": run.fail_count})
        return 0 if run.fail_count == 0 else 1
    if cmd == "canary":
        rule = sim.lifecycle.start_canary(args.deploy, args.percent, actor=args.actor)
        _emit({"component": rule.component, "entries": [list(e) for e in rule.entries]})
        return 0
    if cmd == "advance":
        rule = sim.lifecycle.advance_shift(args.deploy, actor=args.actor)
        _emit({"component": rule.component, "entries": [list(e) for e in rule.entries]})
        return 0
    if cmd == "abort":
        rule = sim.lifecycle.abort(args.deploy, actor=args.actor, detail="via=cli")
        _emit({"component": rule.component, "entries": [list(e) for e in rule.entries]})
        return 0
    if cmd == "promote":
        record = sim.lifecycle.finalize_release(args.deploy, actor=args.actor,
                                                retention_ticks=args.retention_ticks)
        _emit({"deploy": record.id, "state": record.state.value})
        return 0
    if cmd == "rollback":
        rule = sim.lifecycle.rollback(args.component, actor=args.actor)
        _emit({"component": rule.component, "entries": [list(e) for e in rule.entries]})
        return 0
    if cmd == "clone-staging":
        report = sim.clone_staging(date=args.date, actor=args.actor)
        print(report.render())
        return 0
    if cmd == "status":
        for spec in sim.components.all():
            released = sim.registry.released(spec.id)
            deploys = ", ".join(f"{d.id}:{d.state.value}@{d.weight}" for d in sim.registry.deploys_of(spec.id))
            print(f"{spec.id:10s} {spec.kind.value:18s} released={released.id if released else '-':5s} {deploys}")
        return 0
    if cmd == "simulate":
        windows = sim.run_traffic(TrafficProfile(rate=args.rate), args.ticks)
        _emit({d: {"n": w.n, "errors": w.errors} for d, w in windows.items() if w.n})
        return 0
    if cmd == "pipeline":
        sim.clone_staging(actor=args.actor)
        run = run_pipeline(
            sim, args.component, args.version, args.branch, args.commit,
            _behavior_from_args(args), actor=args.actor, suite_id=args.suite, percent=args.percent,
        )
        _emit({"status": run.status, "deploy": run.deploy,
               "stages": [{"stage": s.stage, "ok": s.ok, "detail": s.detail} for s in run.stages]})
        return 0 if run.released else 2
    if cmd == "preview-url":
        print(sim.preview([d for d in args.deploys.split(",") if d]))
        return 0
    return _fail("UnknownCommand", args.command)


if __name__ == "__main__":
    sys.exit(main())
