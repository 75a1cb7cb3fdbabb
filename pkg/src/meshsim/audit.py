"""Append-only audit trail with event-sourcing replay.

Every lifecycle transition lands here with the commit it concerns; replaying
the log reconstructs each deploy's state, the current release per component,
and the live rule weights. Persisted one JSON array per line with fields in
fixed order: tick, actor, action, component, deploy, commit, detail.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

# Lifecycle actions: exactly one audit entry per state/weight transition.
ACTION_CREATED = "deploy.created"
ACTION_BOOTSTRAP = "deploy.bootstrap-released"
ACTION_TESTING = "deploy.testing"
ACTION_TESTED = "deploy.tested"
ACTION_TEST_FAILED = "deploy.test-failed"
ACTION_CANARY = "canary.started"
ACTION_SHIFT = "shift.advanced"
ACTION_ABORTED = "deploy.aborted"
ACTION_FINALIZED = "release.finalized"
ACTION_SUPERSEDED = "deploy.superseded"
ACTION_RESTORED = "deploy.restored"
ACTION_DEMOTED = "deploy.demoted"
ACTION_RETIRED = "deploy.retired"

LIFECYCLE_ACTIONS = {
    ACTION_CREATED,
    ACTION_BOOTSTRAP,
    ACTION_TESTING,
    ACTION_TESTED,
    ACTION_TEST_FAILED,
    ACTION_CANARY,
    ACTION_SHIFT,
    ACTION_ABORTED,
    ACTION_FINALIZED,
    ACTION_SUPERSEDED,
    ACTION_RESTORED,
    ACTION_DEMOTED,
    ACTION_RETIRED,
}

# Control-plane actions outside the lifecycle state machine.
ACTION_CLONED = "staging.cloned"
ACTION_SIMULATED = "traffic.simulated"


@dataclass(frozen=True)
class AuditEntry:
    tick: int
    actor: str
    action: str
    component: str
    deploy: str
    commit: str
    detail: str

    def to_line(self) -> str:
        return json.dumps(
            [self.tick, self.actor, self.action, self.component, self.deploy, self.commit, self.detail],
            separators=(",", ":"),
        )

    @staticmethod
    def from_line(line: str) -> "AuditEntry":
        tick, actor, action, component, deploy, commit, detail = json.loads(line)
        return AuditEntry(tick, actor, action, component, deploy, commit, detail)


class AuditLog:
    def __init__(self, path: Optional[str] = None):
        self.entries: List[AuditEntry] = []
        self._path = path
        self._lock = threading.Lock()

    def append(self, entry: AuditEntry) -> None:
        with self._lock:
            self.entries.append(entry)
            if self._path:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(entry.to_line() + "\n")

    def tail(self, n: int = 50) -> List[AuditEntry]:
        with self._lock:
            return self.entries[-n:]

    def __len__(self) -> int:
        return len(self.entries)

    @staticmethod
    def load(path: str) -> "AuditLog":
        log = AuditLog()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    log.entries.append(AuditEntry.from_line(line))
        return log


def parse_detail(detail: str) -> Dict[str, str]:
    """Extract key=value tokens from a detail string."""
    out: Dict[str, str] = {}
    for token in detail.split():
        if "=" in token:
            k, _, v = token.partition("=")
            out[k] = v
    return out


@dataclass
class ReplayedDeploy:
    state: str
    weight: int = 0


@dataclass
class ReplayState:
    deploys: Dict[str, ReplayedDeploy] = field(default_factory=dict)
    current_release: Dict[str, Optional[str]] = field(default_factory=dict)
    rules: Dict[str, Dict[str, int]] = field(default_factory=dict)


def replay_audit(entries: Iterable[AuditEntry]) -> ReplayState:
    """Rebuild lifecycle state from the log alone (event-sourcing check)."""
    st = ReplayState()

    def deploy(entry: AuditEntry) -> ReplayedDeploy:
        return st.deploys.setdefault(entry.deploy, ReplayedDeploy(state="preproduction"))

    for e in entries:
        if e.action not in LIFECYCLE_ACTIONS:
            continue
        d = deploy(e)
        kv = parse_detail(e.detail)
        if e.action == ACTION_CREATED:
            d.state, d.weight = "preproduction", 0
        elif e.action == ACTION_BOOTSTRAP:
            d.state, d.weight = "released", 100
            st.current_release[e.component] = e.deploy
            st.rules[e.component] = {e.deploy: 100}
        elif e.action == ACTION_TESTING:
            d.state = "testing"
        elif e.action == ACTION_TESTED:
            d.state = "tested"
        elif e.action == ACTION_TEST_FAILED:
            d.state = "test-failed"
        elif e.action in (ACTION_CANARY, ACTION_SHIFT):
            weight = int(kv.get("percent") or kv.get("weight") or 0)
            d.state = "canary" if e.action == ACTION_CANARY else "shifting"
            d.weight = weight
            released = st.current_release.get(e.component)
            rule = {e.deploy: weight}
            if released is not None:
                rule[released] = 100 - weight
                st.deploys[released].weight = 100 - weight
            st.rules[e.component] = rule
        elif e.action == ACTION_ABORTED:
            d.state, d.weight = "aborted", 0
            released = st.current_release.get(e.component)
            if released is not None:
                st.rules[e.component] = {released: 100}
                st.deploys[released].weight = 100
        elif e.action == ACTION_FINALIZED:
            d.state, d.weight = "released", 100
            st.current_release[e.component] = e.deploy
            st.rules[e.component] = {e.deploy: 100}
        elif e.action == ACTION_SUPERSEDED:
            d.state, d.weight = "aborted", 0
        elif e.action == ACTION_RESTORED:
            d.state, d.weight = "released", 100
            st.current_release[e.component] = e.deploy
            st.rules[e.component] = {e.deploy: 100}
        elif e.action == ACTION_DEMOTED:
            d.state, d.weight = "aborted", 0
        elif e.action == ACTION_RETIRED:
            d.state, d.weight = "retired", 0
    return st
