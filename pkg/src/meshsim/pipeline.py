"""The end-to-end upgrade pipeline, deploy through retirement.

Stages run strictly in order: deploy, test, verify, canary, verify-canary,
shift, verify-release, retire-old. The first failing verify halts the run
with the previous release back at 100%; a halted run never leaves rule
weights summing to anything but 100.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

from .deploys import DeployState, VersionBehavior
from .errors import MeshSimError, MetricsRegression
from .harness import TrafficProfile
from .sim import Simulation

logger = logging.getLogger(__name__)

STAGES = ("deploy", "test", "verify", "canary", "verify-canary", "shift", "verify-release", "retire-old")


@dataclass
class StageResult:
    stage: str
    ok: bool
    detail: str = ""


@dataclass
class PipelineRun:
    component: str
    deploy: Optional[str]
    stages: List[StageResult] = field(default_factory=list)
    status: str = "halted-at(deploy)"

    @property
    def released(self) -> bool:
        return self.status == "released"


def run_pipeline(
    sim: Simulation,
    component: str,
    version: str,
    branch: str,
    commit: str,
    behavior: VersionBehavior,
    actor: str = "pipeline",
    suite_id: str = "default",
    percent: Optional[int] = None,
) -> PipelineRun:
    settings = sim.pipeline_settings
    profile = TrafficProfile(rate=settings.rate, seed=sim.next_serial())
    run = PipelineRun(component=component, deploy=None)

    def halt(stage: str, detail: str) -> PipelineRun:
        run.stages.append(StageResult(stage, False, detail))
        run.status = f"halted-at({stage})"
        logger.info("pipeline for %s halted at %s: %s", component, stage, detail)
        return run

    def done(stage: str, detail: str = "") -> None:
        run.stages.append(StageResult(stage, True, detail))

    # deploy
    try:
        record = sim.lifecycle.create_deploy(component, version, branch, commit, behavior, actor)
    except MeshSimError as exc:
        return halt("deploy", str(exc))
    run.deploy = record.id
    done("deploy", record.id)

    # test
    try:
        suite_run = sim.run_suite(suite_id, overrides={component: record.id})
    except MeshSimError as exc:
        return halt("test", str(exc))
    done("test", f"passed={suite_run.pass_count} failed={suite_run.fail_count}")

    # verify
    sim.lifecycle.record_test_result(record.id, suite_run, actor)
    if record.state is not DeployState.TESTED:
        return halt("verify", f"integration tests failed ({suite_run.fail_count} of "
                              f"{suite_run.pass_count + suite_run.fail_count})")
    done("verify")

    # canary
    pct = settings.canary_percent if percent is None else percent
    try:
        sim.lifecycle.start_canary(record.id, pct, actor)
    except MeshSimError as exc:
        return halt("canary", str(exc))
    sim.run_traffic(profile, settings.canary_ticks)
    done("canary", f"percent={pct} ticks={settings.canary_ticks}")

    # verify-canary
    verdict = sim.lifecycle.evaluate(record.id)
    if not verdict.passed:
        sim.lifecycle.abort(record.id, actor, detail="stage=verify-canary")
        return halt("verify-canary", "; ".join(verdict.reasons))
    done("verify-canary", f"z={verdict.z_score:.2f}")

    # shift
    while record.weight < 100:
        sim.run_traffic(profile, settings.step_ticks)
        try:
            sim.lifecycle.advance_shift(record.id, actor)
        except MetricsRegression as exc:
            return halt("shift", "; ".join(exc.verdict.reasons))
        except MeshSimError as exc:
            sim.lifecycle.abort(record.id, actor, detail="stage=shift")
            return halt("shift", str(exc))
    done("shift", f"steps={sim.lifecycle.shift_schedule.steps}")

    # verify-release
    sim.run_traffic(profile, settings.verify_ticks)
    verdict = sim.lifecycle.evaluate(record.id)
    if not verdict.passed:
        sim.lifecycle.abort(record.id, actor, detail="stage=verify-release")
        return halt("verify-release", "; ".join(verdict.reasons))
    old = sim.registry.released(component)
    sim.lifecycle.finalize_release(record.id, actor)
    done("verify-release", f"superseded={old.id if old else 'none'}")

    # retire-old
    retention = sim.lifecycle.retention_ticks
    sim.clock.advance(retention)
    retired = old is not None and sim.registry.get(old.id).state is DeployState.RETIRED
    if not retired and old is not None:
        return halt("retire-old", f"{old.id} still {sim.registry.get(old.id).state.value}")
    done("retire-old", f"retired={old.id if old else 'none'} after {retention} ticks")

    run.status = "released"
    return run
