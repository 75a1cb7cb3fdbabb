"""The deploy/release state machine.

All deploys start as preproduction and serve nothing until a rule gives them
weight. Release requires passing the integration suite and coming from the
main branch; traffic then moves through canary and stepwise shifting, with
abort and rollback restoring the previous release to 100% in a single rule
revision. Every transition is audited with its commit.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Set

from . import audit as audit_actions
from .audit import AuditEntry, AuditLog
from .canary import REASON_SAMPLES, CanaryPolicy, CanaryVerdict, evaluate_canary
from .clock import TICKS_PER_HOUR, TICKS_PER_MINUTE, VirtualClock
from .components import ComponentRegistry
from .deploys import (
    LEGAL_TRANSITIONS,
    DeployRecord,
    DeployRegistry,
    DeployState,
    TestStatus,
    TrafficRule,
    VersionBehavior,
)
from .errors import (
    BudgetDepleted,
    CanaryPercentNotAllowed,
    HoldNotElapsed,
    IllegalTransition,
    InsufficientSamples,
    MetricsRegression,
    NoPredecessor,
    NotAtFullWeight,
    NotMainBranch,
    NotTested,
    RolloutInFlight,
    ScheduleExhausted,
    ValidationError,
)
from .metrics import MetricsRecorder

MAIN_BRANCH = "main"
DEFAULT_RETENTION_TICKS = 6 * TICKS_PER_HOUR


@dataclass
class ShiftSchedule:
    steps: List[int]
    hold_ticks: int = 5 * TICKS_PER_MINUTE

    def __post_init__(self):
        if not self.steps or self.steps[-1] != 100:
            raise ValidationError("shift_schedule.steps", "last step must be 100")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])) or self.steps[0] <= 0:
            raise ValidationError("shift_schedule.steps", "steps must be strictly increasing and positive")

    def next_step(self, current: int) -> Optional[int]:
        for step in self.steps:
            if step > current:
                return step
        return None


DEFAULT_SHIFT_SCHEDULE = ShiftSchedule(steps=[25, 50, 75, 100])


class LifecycleManager:
    """Single writer for deploy states and traffic rules, one lock per component."""

    def __init__(
        self,
        components: ComponentRegistry,
        registry: DeployRegistry,
        metrics: MetricsRecorder,
        audit: AuditLog,
        clock: VirtualClock,
        canary_policy: Optional[CanaryPolicy] = None,
        shift_schedule: Optional[ShiftSchedule] = None,
        retention_ticks: int = DEFAULT_RETENTION_TICKS,
        high_risk: Optional[Set[str]] = None,
        budget_gate: Optional[Callable[[], bool]] = None,
        auto_abort: bool = True,
        preproduction_ttl_ticks: Optional[int] = None,
    ):
        self.components = components
        self.registry = registry
        self.metrics = metrics
        self.audit = audit
        self.clock = clock
        self.canary_policy = canary_policy or CanaryPolicy()
        self.shift_schedule = shift_schedule or DEFAULT_SHIFT_SCHEDULE
        self.retention_ticks = retention_ticks
        self.high_risk = high_risk or set()
        self.budget_gate = budget_gate or (lambda: False)
        self.auto_abort = auto_abort
        self.preproduction_ttl_ticks = preproduction_ttl_ticks
        self.transition_count = 0
        self._locks: Dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._canary_start: Dict[str, int] = {}
        self._last_advance: Dict[str, int] = {}
        clock.on_advance(self.retire_due)

    def _lock_for(self, component: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(component, threading.Lock())

    # -- transition funnel: one audit entry per state/weight transition ------

    def _transition(
        self,
        record: DeployRecord,
        new_state: DeployState,
        action: str,
        actor: str,
        detail: str = "",
        weight: Optional[int] = None,
        force: bool = False,
    ) -> None:
        legal = new_state in LEGAL_TRANSITIONS[record.state] or (
            new_state is record.state is DeployState.SHIFTING
        )
        if not legal and not force:
            raise IllegalTransition(f"{record.id}: {record.state.value} -> {new_state.value}")
        record.state = new_state
        if weight is not None:
            record.weight = weight
        self.transition_count += 1
        self.audit.append(
            AuditEntry(
                tick=self.clock.now,
                actor=actor,
                action=action,
                component=record.component,
                deploy=record.id,
                commit=record.commit,
                detail=detail,
            )
        )

    # -- operations ----------------------------------------------------------

    def create_deploy(
        self,
        component: str,
        version: str,
        branch: str,
        commit: str,
        behavior: VersionBehavior,
        actor: str = "dev",
    ) -> DeployRecord:
        self.components.get(component)  # raises UnknownComponent
        record = DeployRecord(
            id=self.registry.new_deploy_id(),
            component=component,
            version=version,
            branch=branch,
            commit=commit,
            behavior=behavior,
            created_at=self.clock.now,
        )
        self.registry.add(record)
        self.transition_count += 1
        self.audit.append(
            AuditEntry(self.clock.now, actor, audit_actions.ACTION_CREATED, component, record.id, commit,
                       f"version={version} branch={branch}")
        )
        return record

    def bootstrap_release(
        self,
        component: str,
        version: str,
        commit: str,
        behavior: VersionBehavior,
        actor: str = "scenario",
    ) -> DeployRecord:
        """Install a component's initial production release at scenario load."""
        record = self.create_deploy(component, version, MAIN_BRANCH, commit, behavior, actor)
        record.test_status = TestStatus.PASSED
        with self._lock_for(component):
            self._transition(record, DeployState.RELEASED, audit_actions.ACTION_BOOTSTRAP, actor,
                             "weight=100", weight=100, force=True)
            self.registry.set_rule(component, [(record.id, 100)])
        return record

    def record_test_result(self, deploy_id: str, suite_run, actor: str = "ci") -> DeployRecord:
        """Move a deploy through Testing to Tested or TestFailed per the suite run."""
        record = self.registry.get(deploy_id)
        with self._lock_for(record.component):
            if record.state not in (DeployState.PREPRODUCTION, DeployState.TESTING, DeployState.ABORTED):
                raise IllegalTransition(f"cannot test a deploy in state {record.state.value}")
            if record.state is not DeployState.TESTING:
                self._transition(record, DeployState.TESTING, audit_actions.ACTION_TESTING, actor,
                                 f"suite={getattr(suite_run, 'suite_id', '?')}")
                record.retire_at = None  # a deploy back in test is no longer queued for retirement
            passed = suite_run.fail_count == 0
            detail = f"passed={suite_run.pass_count} failed={suite_run.fail_count}"
            if passed:
                record.test_status = TestStatus.PASSED
                self._transition(record, DeployState.TESTED, audit_actions.ACTION_TESTED, actor, detail)
            else:
                record.test_status = TestStatus.FAILED
                self._transition(record, DeployState.TEST_FAILED, audit_actions.ACTION_TEST_FAILED, actor, detail)
        return record

    def start_canary(self, deploy_id: str, percent: int, actor: str = "dev",
                     policy: Optional[CanaryPolicy] = None) -> TrafficRule:
        policy = policy or self.canary_policy
        record = self.registry.get(deploy_id)
        component = record.component
        with self._lock_for(component):
            if record.state is not DeployState.TESTED or record.test_status is not TestStatus.PASSED:
                raise NotTested(f"{deploy_id} has not passed the integration tests")
            if record.branch != MAIN_BRANCH:
                raise NotMainBranch(f"{deploy_id} was built from '{record.branch}'")
            if percent not in policy.initial_percents:
                raise CanaryPercentNotAllowed(f"percent {percent} not in allowed set {policy.initial_percents}")
            if component in self.high_risk and self.budget_gate():
                raise BudgetDepleted(f"error budget depleted; high-risk canary on '{component}' blocked")
            released = self.registry.released(component)
            if released is None:
                raise IllegalTransition(f"'{component}' has no current release to canary against")
            for other in self.registry.deploys_of(component):
                if other.id != deploy_id and other.state in (DeployState.CANARY, DeployState.SHIFTING):
                    raise RolloutInFlight(f"'{component}' already has {other.id} in {other.state.value}")
            rule = self.registry.set_rule(component, [(released.id, 100 - percent), (record.id, percent)])
            self._transition(record, DeployState.CANARY, audit_actions.ACTION_CANARY, actor,
                             f"percent={percent}", weight=percent)
            self._canary_start[deploy_id] = self.clock.now
            self._last_advance[deploy_id] = self.clock.now
        return rule

    def canary_windows(self, deploy_id: str):
        """Canary and baseline metrics aligned to the canary start tick."""
        record = self.registry.get(deploy_id)
        released = self.registry.released(record.component)
        start = self._canary_start.get(deploy_id, record.created_at)
        end = self.clock.now + 1
        canary_win = self.metrics.window(deploy_id, start, end)
        baseline_win = self.metrics.window(released.id if released else "", start, end)
        return canary_win, baseline_win

    def evaluate(self, deploy_id: str, policy: Optional[CanaryPolicy] = None) -> CanaryVerdict:
        canary_win, baseline_win = self.canary_windows(deploy_id)
        return evaluate_canary(canary_win, baseline_win, policy or self.canary_policy)

    def advance_shift(self, deploy_id: str, actor: str = "dev",
                      schedule: Optional[ShiftSchedule] = None) -> TrafficRule:
        schedule = schedule or self.shift_schedule
        record = self.registry.get(deploy_id)
        component = record.component
        with self._lock_for(component):
            if record.state not in (DeployState.CANARY, DeployState.SHIFTING):
                raise IllegalTransition(f"cannot advance a deploy in state {record.state.value}")
            next_weight = schedule.next_step(record.weight)
            if next_weight is None:
                raise ScheduleExhausted(f"{deploy_id} is already at weight {record.weight}")
            elapsed = self.clock.now - self._last_advance.get(deploy_id, record.created_at)
            if elapsed < schedule.hold_ticks:
                raise HoldNotElapsed(f"hold not elapsed: {elapsed}/{schedule.hold_ticks} ticks")
            verdict = self.evaluate(deploy_id)
            if not verdict.passed:
                if verdict.reasons == [REASON_SAMPLES]:
                    raise InsufficientSamples("not enough samples to compare against the baseline")
                if self.auto_abort:
                    self._abort_locked(record, actor, detail="auto-abort=true")
                raise MetricsRegression(verdict)
            released = self.registry.released(component)
            rule = self.registry.set_rule(component, [(released.id, 100 - next_weight), (record.id, next_weight)])
            self._transition(record, DeployState.SHIFTING, audit_actions.ACTION_SHIFT, actor,
                             f"weight={next_weight}", weight=next_weight)
            self._last_advance[deploy_id] = self.clock.now
        return rule

    def _abort_locked(self, record: DeployRecord, actor: str, detail: str = "") -> TrafficRule:
        released = self.registry.released(record.component)
        if released is None:
            raise IllegalTransition(f"'{record.component}' has no release to restore")
        rule = self.registry.set_rule(record.component, [(released.id, 100)])
        self._transition(record, DeployState.ABORTED, audit_actions.ACTION_ABORTED, actor, detail, weight=0)
        return rule

    def abort(self, deploy_id: str, actor: str = "dev", detail: str = "") -> TrafficRule:
        """Pull a canary/shifting deploy; the previous release serves 100% again."""
        record = self.registry.get(deploy_id)
        with self._lock_for(record.component):
            if record.state not in (DeployState.CANARY, DeployState.SHIFTING):
                raise IllegalTransition(f"cannot abort a deploy in state {record.state.value}")
            return self._abort_locked(record, actor, detail)

    def finalize_release(self, deploy_id: str, actor: str = "dev",
                         retention_ticks: Optional[int] = None) -> DeployRecord:
        """Mark a fully-shifted deploy as the release; park the predecessor for retention."""
        retention = self.retention_ticks if retention_ticks is None else retention_ticks
        record = self.registry.get(deploy_id)
        component = record.component
        with self._lock_for(component):
            if record.state is not DeployState.SHIFTING or record.weight != 100:
                raise NotAtFullWeight(f"{deploy_id} is at weight {record.weight} in state {record.state.value}")
            old = self.registry.released(component)
            self.registry.set_rule(component, [(record.id, 100)])
            self._transition(record, DeployState.RELEASED, audit_actions.ACTION_FINALIZED, actor, "weight=100",
                             weight=100)
            if old is not None:
                old.retire_at = self.clock.now + retention
                self._transition(old, DeployState.ABORTED, audit_actions.ACTION_SUPERSEDED, actor,
                                 f"retire_at={old.retire_at}", weight=0)
                self.registry.set_predecessor(component, old.id)
        return record

    def rollback(self, component: str, actor: str = "operator") -> TrafficRule:
        """Emergency: restore the non-retired predecessor to 100% immediately."""
        with self._lock_for(component):
            pred = self.registry.predecessor(component)
            if pred is None:
                raise NoPredecessor(f"'{component}' has no rollback-eligible predecessor")
            current = self.registry.released(component)
            for other in self.registry.deploys_of(component):
                if other.state in (DeployState.CANARY, DeployState.SHIFTING):
                    self._abort_locked(other, actor, detail="rollback-preemption=true")
            rule = self.registry.set_rule(component, [(pred.id, 100)])
            if current is not None:
                self._transition(current, DeployState.ABORTED, audit_actions.ACTION_DEMOTED, actor,
                                 "emergency=true", weight=0)
            pred.retire_at = None
            self._transition(pred, DeployState.RELEASED, audit_actions.ACTION_RESTORED, actor,
                             "emergency=true", weight=100)
            self.registry.set_predecessor(component, None)
        return rule

    # -- housekeeping ---------------------------------------------------------

    def retire_due(self, now: Optional[int] = None) -> List[str]:
        """Retire superseded deploys past retention (and TTL-expired preproduction)."""
        now = self.clock.now if now is None else now
        retired = []
        for record in self.registry.all_deploys():
            due = (
                record.state is DeployState.ABORTED
                and record.retire_at is not None
                and now >= record.retire_at
            )
            ttl_due = (
                self.preproduction_ttl_ticks is not None
                and record.state is DeployState.PREPRODUCTION
                and now >= record.created_at + self.preproduction_ttl_ticks
            )
            if due or ttl_due:
                with self._lock_for(record.component):
                    if record.state in (DeployState.ABORTED, DeployState.PREPRODUCTION):
                        self._transition(record, DeployState.RETIRED, audit_actions.ACTION_RETIRED, "janitor",
                                         "ttl=true" if ttl_due else "retention=true", weight=0)
                        retired.append(record.id)
        return retired
