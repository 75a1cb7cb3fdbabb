"""Deploy records, lifecycle states, and per-component traffic rules.

A deploy is infrastructure for one version of one component; it serves no
default traffic until a rule gives it weight. The registry is the shared
read-mostly view: request execution reads rule snapshots and deploy behaviors,
the lifecycle manager is the only writer.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .errors import UnknownComponent, UnknownDeploy, ValidationError


class DeployState(Enum):
    PREPRODUCTION = "preproduction"
    TESTING = "testing"
    TESTED = "tested"
    TEST_FAILED = "test-failed"
    CANARY = "canary"
    SHIFTING = "shifting"
    RELEASED = "released"
    ABORTED = "aborted"
    RETIRED = "retired"


# States whose deploys may hold a production store handle.
SERVING_STATES = frozenset({DeployState.CANARY, DeployState.SHIFTING, DeployState.RELEASED})

# Legal transitions. Released->Aborted covers both rollback demotion and the
# supersede-on-finalize parking of the old release; Aborted->Released is the
# rollback restore within the retention window.
LEGAL_TRANSITIONS = {
    DeployState.PREPRODUCTION: {DeployState.TESTING, DeployState.RETIRED},
    DeployState.TESTING: {DeployState.TESTED, DeployState.TEST_FAILED},
    DeployState.TESTED: {DeployState.CANARY},
    DeployState.TEST_FAILED: set(),
    DeployState.CANARY: {DeployState.SHIFTING, DeployState.ABORTED},
    DeployState.SHIFTING: {DeployState.RELEASED, DeployState.ABORTED},
    DeployState.RELEASED: {DeployState.RETIRED, DeployState.ABORTED},
    DeployState.ABORTED: {DeployState.TESTING, DeployState.RETIRED, DeployState.RELEASED},
    DeployState.RETIRED: set(),
}
# Preproduction->Retired is only taken when TTL-based expiry is enabled.


class TestStatus(str, Enum):
    UNTESTED = "untested"
    PASSED = "passed"
    FAILED = "failed"


@dataclass
class VersionBehavior:
    """Simulated stand-in for what a version's code actually does.

    `testing_error_prob`, when set, replaces `error_prob` for testing-context
    requests: it models defects on paths the integration suite does not
    exercise (a version that tests clean but degrades under production
    traffic). Unset means test traffic behaves like production traffic.
    """

    latency_mean: float = 10.0
    latency_jitter: float = 0.0
    error_prob: float = 0.0
    marker: str = ""
    testing_error_prob: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.error_prob <= 1.0:
            raise ValidationError("behavior.error_prob", "must be within [0, 1]")
        if self.testing_error_prob is not None and not 0.0 <= self.testing_error_prob <= 1.0:
            raise ValidationError("behavior.testing_error_prob", "must be within [0, 1]")
        if self.latency_mean < 0 or self.latency_jitter < 0:
            raise ValidationError("behavior.latency", "latency mean and jitter must be >= 0")

    def error_prob_for(self, testing: bool) -> float:
        if testing and self.testing_error_prob is not None:
            return self.testing_error_prob
        return self.error_prob


@dataclass
class DeployRecord:
    id: str
    component: str
    version: str
    branch: str
    commit: str
    behavior: VersionBehavior
    state: DeployState = DeployState.PREPRODUCTION
    weight: int = 0
    created_at: int = 0
    test_status: TestStatus = TestStatus.UNTESTED
    retire_at: Optional[int] = None  # set when superseded; retired once the clock passes it

    @property
    def live(self) -> bool:
        return self.state is not DeployState.RETIRED


@dataclass(frozen=True)
class TrafficRule:
    """Weighted split of a component's default traffic across its deploys."""

    component: str
    entries: Tuple[Tuple[str, int], ...]
    version: int

    def weight_of(self, deploy_id: str) -> int:
        for did, w in self.entries:
            if did == deploy_id:
                return w
        return 0


class DeployRegistry:
    """Deploys and current traffic rules for every component.

    Rule swaps are atomic under a lock; readers take whole-rule snapshots so a
    request sees one rule revision end to end.
    """

    def __init__(self):
        self._deploys: Dict[str, DeployRecord] = {}
        self._by_component: Dict[str, List[str]] = {}
        self._rules: Dict[str, TrafficRule] = {}
        self._rule_versions: Dict[str, int] = {}
        self._predecessor: Dict[str, Optional[str]] = {}
        self._seq = 0
        self._lock = threading.Lock()

    # -- deploys -----------------------------------------------------------

    def new_deploy_id(self) -> str:
        with self._lock:
            self._seq += 1
            return f"d{self._seq}"

    def add(self, record: DeployRecord) -> None:
        with self._lock:
            if record.id in self._deploys:
                raise ValidationError(f"deploys.{record.id}", "duplicate deploy id")
            self._deploys[record.id] = record
            self._by_component.setdefault(record.component, []).append(record.id)

    def get(self, deploy_id: str) -> DeployRecord:
        try:
            return self._deploys[deploy_id]
        except KeyError:
            raise UnknownDeploy("?", deploy_id, "no such deploy") from None

    def __contains__(self, deploy_id: str) -> bool:
        return deploy_id in self._deploys

    def deploys_of(self, component: str) -> List[DeployRecord]:
        return [self._deploys[d] for d in self._by_component.get(component, [])]

    def all_deploys(self) -> List[DeployRecord]:
        return list(self._deploys.values())

    def live_deploy(self, component: str, deploy_id: str) -> DeployRecord:
        """The deploy, checked to exist, belong to `component`, and not be retired."""
        record = self._deploys.get(deploy_id)
        if record is None or record.component != component:
            raise UnknownDeploy(component, deploy_id, "no such deploy for component")
        if not record.live:
            raise UnknownDeploy(component, deploy_id, "deploy is retired")
        return record

    def released(self, component: str) -> Optional[DeployRecord]:
        for record in self.deploys_of(component):
            if record.state is DeployState.RELEASED:
                return record
        return None

    # -- rules -------------------------------------------------------------

    def set_rule(self, component: str, entries: List[Tuple[str, int]]) -> TrafficRule:
        """Install a new rule revision atomically. Weights must sum to 100."""
        weights = [w for _, w in entries]
        if any(not isinstance(w, int) or w < 0 for w in weights):
            raise ValidationError(f"rules.{component}", "weights must be non-negative integers")
        if sum(weights) != 100:
            raise ValidationError(f"rules.{component}", f"weights sum to {sum(weights)}, expected 100")
        for deploy_id, _ in entries:
            record = self._deploys.get(deploy_id)
            if record is None or not record.live:
                raise UnknownDeploy(component, deploy_id, "rule references a non-live deploy")
        with self._lock:
            version = self._rule_versions.get(component, 0) + 1
            self._rule_versions[component] = version
            rule = TrafficRule(component=component, entries=tuple(entries), version=version)
            self._rules[component] = rule
        for deploy_id, weight in entries:
            self._deploys[deploy_id].weight = weight
        return rule

    def rule(self, component: str) -> TrafficRule:
        try:
            return self._rules[component]
        except KeyError:
            raise UnknownComponent(f"no traffic rule for '{component}'") from None

    def rules(self) -> Dict[str, TrafficRule]:
        return dict(self._rules)

    # -- predecessor chain (length 1, for rollback) --------------------------

    def set_predecessor(self, component: str, deploy_id: Optional[str]) -> None:
        self._predecessor[component] = deploy_id

    def predecessor(self, component: str) -> Optional[DeployRecord]:
        """The superseded release, while still parked (Aborted) and unretired."""
        deploy_id = self._predecessor.get(component)
        if deploy_id is None:
            return None
        record = self._deploys[deploy_id]
        return record if record.state is DeployState.ABORTED else None
