"""The 8-stage upgrade pipeline end to end."""

from __future__ import annotations

import random

import os

import yaml

from meshsim.audit import LIFECYCLE_ACTIONS
from meshsim.deploys import DeployState, VersionBehavior
from meshsim.pipeline import STAGES, run_pipeline
from meshsim.scenario import build_simulation, default_scenario_path, parse_scenario


def healthy_behavior():
    return VersionBehavior(latency_mean=12, latency_jitter=3, error_prob=0.0, marker="a-v2")


def test_healthy_release_walks_all_stages(cloned_sim):
    sim = cloned_sim
    run = run_pipeline(sim, "svc-a", "v2", "main", "feadbee", healthy_behavior())
    assert run.status == "released"
    assert [s.stage for s in run.stages] == list(STAGES)
    assert all(s.ok for s in run.stages)
    record = sim.registry.get(run.deploy)
    assert record.state is DeployState.RELEASED and record.weight == 100
    assert sim.registry.get("d3").state is DeployState.RETIRED  # the old release


def test_healthy_release_audit_order(cloned_sim):
    sim = cloned_sim
    run = run_pipeline(sim, "svc-a", "v2", "main", "feadbee", healthy_behavior())
    actions = [e.action for e in sim.audit.entries
               if e.component == "svc-a" and e.action in LIFECYCLE_ACTIONS and e.deploy == run.deploy]
    assert actions == [
        "deploy.created",
        "deploy.testing",
        "deploy.tested",
        "canary.started",
        "shift.advanced",
        "shift.advanced",
        "shift.advanced",
        "shift.advanced",
        "release.finalized",
    ]
    old_actions = [e.action for e in sim.audit.entries
                   if e.deploy == "d3" and e.action in LIFECYCLE_ACTIONS]
    assert old_actions[-2:] == ["deploy.superseded", "deploy.retired"]


def test_failing_tests_halt_before_any_traffic(cloned_sim):
    sim = cloned_sim
    rule_before = sim.registry.rule("svc-a").version
    run = run_pipeline(sim, "svc-a", "bad", "main", "0ddba11", VersionBehavior(error_prob=1.0))
    assert run.status == "halted-at(verify)"
    assert [s.stage for s in run.stages] == ["deploy", "test", "verify"]
    assert sim.registry.get(run.deploy).state is DeployState.TEST_FAILED
    assert sim.registry.rule("svc-a").version == rule_before  # rules untouched
    assert sim.registry.rule("svc-a").entries == (("d3", 100),)


def test_untested_path_regression_halts_at_verify_canary(cloned_sim):
    # passes the suite (clean under test traffic) but degrades under production load
    sim = cloned_sim
    behavior = VersionBehavior(error_prob=0.05, testing_error_prob=0.0, marker="a-v2")
    run = run_pipeline(sim, "svc-a", "v2", "main", "5badc0de", behavior)
    assert run.status == "halted-at(verify-canary)"
    assert [s.stage for s in run.stages] == ["deploy", "test", "verify", "canary", "verify-canary"]
    assert "error-rate-regression" in run.stages[-1].detail
    record = sim.registry.get(run.deploy)
    assert record.state is DeployState.ABORTED and record.weight == 0
    assert sim.registry.rule("svc-a").entries == (("d3", 100),)  # old release back at 100


def test_feature_branch_halts_at_canary(cloned_sim):
    run = run_pipeline(cloned_sim, "svc-a", "v2", "feature-z", "c0de", healthy_behavior())
    assert run.status == "halted-at(canary)"
    assert cloned_sim.registry.rule("svc-a").entries == (("d3", 100),)


def mini_scenario_config():
    """Default scenario with desk-size traffic knobs for randomized runs."""
    with open(default_scenario_path(), encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    doc["pipeline"] = {"rate": 3, "canary_percent": 10, "canary_ticks": 25, "step_ticks": 20, "verify_ticks": 8}
    doc["shift_schedule"] = {"steps": [50, 100], "hold_ticks": 20}
    doc["canary_policy"] = {"initial_percents": [1, 10], "min_samples": 5,
                            "error_delta_abs": 0.005, "latency_quantile": 0.99,
                            "latency_delta_rel": 0.2, "significance": 3.0}
    return parse_scenario(doc, base_dir=os.path.dirname(default_scenario_path()))


def test_randomized_pipeline_safety():
    # no terminal state may put production weight on an untested deploy
    config = mini_scenario_config()
    rng = random.Random(20260810)
    outcomes = {}
    for i in range(1000):
        sim = build_simulation(config)
        sim.clone_staging()
        error_prob = rng.choice([0.0, 0.0, 0.02, 0.4, 1.0])
        testing_error = rng.choice([None, 0.0])
        branch = rng.choice(["main", "main", "main", "feature-q"])
        behavior = VersionBehavior(error_prob=error_prob, testing_error_prob=testing_error, marker=f"m{i}")
        run = run_pipeline(sim, "svc-a", f"v{i}", branch, f"c{i}", behavior)
        outcomes[run.status] = outcomes.get(run.status, 0) + 1
        for component, rule in sim.registry.rules().items():
            assert sum(w for _, w in rule.entries) == 100
            for deploy_id, weight in rule.entries:
                if weight > 0:
                    record = sim.registry.get(deploy_id)
                    assert record.test_status.value == "passed"
                    assert record.branch == "main"
    assert len(outcomes) >= 3, f"expected a mix of outcomes, got {outcomes}"
