"""Shared builders for the test suite."""

from __future__ import annotations

from dataclasses import dataclass

from meshsim.audit import AuditLog
from meshsim.canary import CanaryPolicy
from meshsim.clock import VirtualClock
from meshsim.components import ComponentKind, ComponentRegistry, ComponentSpec
from meshsim.deploys import DeployRegistry, VersionBehavior
from meshsim.lifecycle import LifecycleManager, ShiftSchedule
from meshsim.metrics import MetricsRecorder


@dataclass
class FakeSuiteRun:
    pass_count: int
    fail_count: int
    suite_id: str = "unit"


def passing_run(tests: int = 12) -> FakeSuiteRun:
    return FakeSuiteRun(pass_count=tests, fail_count=0)


def failing_run(passed: int = 11, failed: int = 1) -> FakeSuiteRun:
    return FakeSuiteRun(pass_count=passed, fail_count=failed)


def tiny_manager(
    component_ids=("gw", "svc"),
    hold_ticks: int = 0,
    min_samples: int = 10,
    **kwargs,
):
    """A lifecycle world with no stores or mesh: fast enough to fuzz."""
    specs = [ComponentSpec(id=component_ids[0], kind=ComponentKind.GATEWAY,
                           downstream=list(component_ids[1:]))]
    specs += [ComponentSpec(id=c, kind=ComponentKind.MESH_SERVICE) for c in component_ids[1:]]
    components = ComponentRegistry(specs)
    registry = DeployRegistry()
    clock = VirtualClock()
    manager = LifecycleManager(
        components=components,
        registry=registry,
        metrics=MetricsRecorder(),
        audit=AuditLog(),
        clock=clock,
        canary_policy=CanaryPolicy(min_samples=min_samples),
        shift_schedule=ShiftSchedule(steps=[25, 50, 75, 100], hold_ticks=hold_ticks),
        **kwargs,
    )
    for cid in component_ids:
        manager.bootstrap_release(cid, "v1", f"commit-{cid}", VersionBehavior(marker=f"{cid}-v1"))
    return manager


def feed_clean_metrics(manager, deploy_id: str, n: int = 400, baseline_n: int = 400):
    """Healthy, comparable canary/baseline samples so interim checks pass."""
    record = manager.registry.get(deploy_id)
    released = manager.registry.released(record.component)
    tick = manager.clock.now
    for _ in range(n):
        manager.metrics.record(deploy_id, tick, 10.0, False)
    for _ in range(baseline_n):
        manager.metrics.record(released.id, tick, 10.0, False)


def random_lifecycle_op(manager, rng, deploys, guided_prob: float = 0.0) -> None:
    """One randomized lifecycle operation; may raise like any misused API.

    With probability `guided_prob` the op advances whatever rollout is in
    flight (so fuzz runs also cover the deep states), otherwise it is an
    arbitrary call with arbitrary targets.
    """
    from meshsim.deploys import DeployState

    if rng.random() < guided_prob:
        for record in (manager.registry.get(d) for d in reversed(deploys)):
            if record.state is DeployState.PREPRODUCTION:
                manager.record_test_result(record.id, passing_run())
                return
            if record.state is DeployState.TESTED and record.branch == "main":
                manager.start_canary(record.id, rng.choice([1, 10]))
                return
            if record.state in (DeployState.CANARY, DeployState.SHIFTING):
                if record.weight >= 100:
                    manager.finalize_release(record.id)
                else:
                    feed_clean_metrics(manager, record.id, n=20, baseline_n=20)
                    manager.clock.advance(1)
                    manager.advance_shift(record.id)
                return
        deploys.append(manager.create_deploy("svc", "vg", "main", "cg", VersionBehavior()).id)
        return

    op = rng.randrange(7)
    if op == 0:
        branch = rng.choice(["main", "main", "feature-q"])
        deploys.append(manager.create_deploy("svc", "vx", branch, "cx", VersionBehavior()).id)
    elif op == 1:
        run = passing_run() if rng.random() < 0.7 else failing_run()
        manager.record_test_result(rng.choice(deploys), run)
    elif op == 2:
        manager.start_canary(rng.choice(deploys), rng.choice([1, 7, 10]))
    elif op == 3:
        target = rng.choice(deploys)
        feed_clean_metrics(manager, target, n=20, baseline_n=20)
        manager.clock.advance(1)
        manager.advance_shift(target)
    elif op == 4:
        manager.abort(rng.choice(deploys))
    elif op == 5:
        manager.finalize_release(rng.choice(deploys))
    else:
        manager.rollback("svc")
