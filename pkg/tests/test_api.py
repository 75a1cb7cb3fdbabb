"""Control-plane HTTP API: parity with in-process state, conflicts, audit."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from meshsim.api import create_app
from meshsim.audit import LIFECYCLE_ACTIONS, replay_audit


@pytest.fixture
def client(cloned_sim):
    return TestClient(create_app(cloned_sim))


def deploy_via_api(client, component="svc-a", version="v2", error_prob=0.0, marker="a-v2"):
    r = client.post("/deploys", json={
        "component": component, "version": version, "branch": "main", "commit": f"{version}-sha",
        "behavior": {"latency_mean": 10, "error_prob": error_prob, "marker": marker},
    }, headers={"x-actor": "op-api"})
    assert r.status_code == 200, r.text
    return r.json()["id"]


def test_components_listing(client, cloned_sim):
    body = client.get("/components").json()
    assert len(body["components"]) == 6
    by_id = {c["id"]: c for c in body["components"]}
    assert by_id["svc-a"]["released"] == "d3"
    assert by_id["svc-a"]["rule"]["entries"] == [["d3", 100]]
    assert by_id["gw"]["kind"] == "gateway"


def test_deploy_test_canary_flow(client, cloned_sim):
    deploy_id = deploy_via_api(client)
    r = client.post(f"/deploys/{deploy_id}/canary", json={"percent": 1})
    assert r.status_code == 409
    assert r.json()["error"] == "NotTested"

    r = client.post(f"/deploys/{deploy_id}/test", json={})
    assert r.status_code == 200
    assert r.json()["deploy"]["state"] == "tested"
    assert r.json()["suite_run"]["fail_count"] == 0

    r = client.post(f"/deploys/{deploy_id}/canary", json={"percent": 1}, headers={"x-actor": "op-api"})
    assert r.status_code == 200
    assert r.json()["entries"] == [["d3", 99], [deploy_id, 1]]

    # GET reflects the same state the in-process registry holds
    listed = client.get("/components/svc-a/deploys").json()["deploys"]
    weights = {d["id"]: d["weight"] for d in listed}
    assert weights[deploy_id] == 1 and weights["d3"] == 99


def test_metrics_carries_canary_verdict(client, cloned_sim):
    deploy_id = deploy_via_api(client)
    client.post(f"/deploys/{deploy_id}/test", json={})
    client.post(f"/deploys/{deploy_id}/canary", json={"percent": 10})
    client.post("/simulate", json={"rate": 20, "ticks": 100})
    body = client.get(f"/metrics?deploy={deploy_id}").json()
    assert body["n"] > 0
    assert "verdict" in body
    assert body["verdict"]["pass"] is True
    assert body["verdict"]["baseline"]["n"] > body["verdict"]["canary"]["n"]


def test_abort_mid_shift_restores_old_release(client, cloned_sim):
    sim = cloned_sim
    deploy_id = deploy_via_api(client)
    client.post(f"/deploys/{deploy_id}/test", json={})
    client.post(f"/deploys/{deploy_id}/canary", json={"percent": 10})
    client.post("/simulate", json={"rate": 20, "ticks": 300})
    r = client.post(f"/deploys/{deploy_id}/advance")
    assert r.status_code == 200, r.text
    r = client.post(f"/deploys/{deploy_id}/abort", headers={"x-actor": "op-api"})
    assert r.status_code == 200
    body = client.get("/components").json()
    rule = {c["id"]: c["rule"] for c in body["components"]}["svc-a"]
    assert rule["entries"] == [["d3", 100]]


def test_conflict_errors_mirror_lifecycle(client):
    r = client.post("/deploys/d3/abort")  # released deploy
    assert r.status_code == 409
    assert r.json()["error"] == "IllegalTransition"
    r = client.post("/components/svc-a/rollback")
    assert r.status_code == 409
    assert r.json()["error"] == "NoPredecessor"
    r = client.post("/deploys/d404/test", json={})
    assert r.status_code == 404


def test_validation_errors_are_400(client):
    r = client.post("/deploys", json={"component": "svc-a"})
    assert r.status_code == 400
    r = client.post("/deploys/d3/canary", json={})
    assert r.status_code == 400


def test_budget_endpoint(client):
    body = client.get("/budget").json()
    assert body["allowed_error_minutes"] == 21.6
    assert body["depleted"] is False


def test_staging_clone_and_report(cloned_sim):
    # fresh sim without a clone: report is 404 until POST /staging/clone
    from meshsim.scenario import build_simulation, load_default_scenario

    sim = build_simulation(load_default_scenario())
    client = TestClient(create_app(sim))
    assert client.get("/staging/report").status_code == 404
    r = client.post("/staging/clone", json={}, headers={"x-actor": "op-api"})
    assert r.status_code == 200
    assert "users" in r.json()["report"]["tables"]
    assert client.get("/staging/report").status_code == 200
    r = client.post("/staging/clone", json={})
    assert r.status_code == 409  # same-day clone conflicts


def test_preview_url_round_trip(client, cloned_sim):
    deploy_id = deploy_via_api(client)
    token = client.get(f"/preview-url?deploys={deploy_id}").json()["token"]
    ctx = cloned_sim.verify(token)
    assert ctx.overrides == {"svc-a": deploy_id}
    assert ctx.testing is True


def test_audit_records_actor_and_replays(client, cloned_sim):
    sim = cloned_sim
    deploy_id = deploy_via_api(client)
    client.post(f"/deploys/{deploy_id}/test", json={}, headers={"x-actor": "op-api"})
    client.post(f"/deploys/{deploy_id}/canary", json={"percent": 10}, headers={"x-actor": "op-api"})
    entries = client.get("/audit?n=200").json()["entries"]
    actors = {e["actor"] for e in entries if e["deploy"] == deploy_id}
    assert actors == {"op-api"}

    replayed = replay_audit(e for e in sim.audit.entries if e.action in LIFECYCLE_ACTIONS)
    for record in sim.registry.all_deploys():
        assert replayed.deploys[record.id].state == record.state.value


def test_api_state_parity_after_mutations(client, cloned_sim):
    # GET-reported state must equal in-process state after any call sequence
    sim = cloned_sim
    deploy_id = deploy_via_api(client)
    client.post(f"/deploys/{deploy_id}/test", json={})
    client.post(f"/deploys/{deploy_id}/canary", json={"percent": 10})
    client.post("/simulate", json={"rate": 10, "ticks": 20})
    client.post(f"/deploys/{deploy_id}/abort")

    listed = {c["id"]: c for c in client.get("/components").json()["components"]}
    for cid in sim.components.ids():
        released = sim.registry.released(cid)
        assert listed[cid]["released"] == (released.id if released else None)
        rule = sim.registry.rule(cid)
        assert listed[cid]["rule"]["version"] == rule.version
        assert [tuple(e) for e in listed[cid]["rule"]["entries"]] == list(rule.entries)
        reported = {d["id"]: d for d in client.get(f"/components/{cid}/deploys").json()["deploys"]}
        for record in sim.registry.deploys_of(cid):
            assert reported[record.id]["state"] == record.state.value
            assert reported[record.id]["weight"] == record.weight
            assert reported[record.id]["test_status"] == record.test_status.value


def test_pipeline_endpoint(client, cloned_sim):
    r = client.post("/pipeline", json={
        "component": "svc-b", "version": "v2", "branch": "main", "commit": "bb2",
        "behavior": {"latency_mean": 10, "error_prob": 0.0, "marker": "b-v2"},
    })
    assert r.status_code == 200
    body = r.json()
    assert body["released"] is True
    assert [s["stage"] for s in body["stages"]] == [
        "deploy", "test", "verify", "canary", "verify-canary", "shift", "verify-release", "retire-old",
    ]
    assert cloned_sim.registry.released("svc-b").id == body["deploy"]


def test_simulate_writes_audit_entry(client, cloned_sim):
    before = len(cloned_sim.audit.entries)
    client.post("/simulate", json={"rate": 5, "ticks": 2}, headers={"x-actor": "op-api"})
    new = cloned_sim.audit.entries[before:]
    assert any(e.action == "traffic.simulated" and e.actor == "op-api" for e in new)


def test_request_endpoint_with_annotation(client, cloned_sim):
    deploy_id = deploy_via_api(client, marker="a-vX")
    token = client.get(f"/preview-url?deploys={deploy_id}").json()["token"]
    body = client.post("/requests", json={"annotation": token}).json()
    assert body["status"] == "ok"
    assert body["markers"]["svc-a"] == "a-vX"
    stores = {h["component"]: h["store"] for h in body["trace"]}
    assert stores["svc-a"] == "staging"
