"""Simulation facade: one object wiring the mesh, stores, lifecycle, and harness."""

from __future__ import annotations

import random
import threading
from typing import Dict, List, Optional, Tuple

from .annotations import PRODUCTION_ANNOTATION, RequestContext
from .audit import ACTION_CLONED, AuditEntry, AuditLog
from .budget import ErrorBudget, check_error_budget
from .canary import CanaryPolicy
from .clock import VirtualClock
from .components import ComponentRegistry
from .deploys import DeployRegistry
from .errors import UnknownSuite
from .execution import Mesh, Response, Trace
from .harness import (
    EventBus,
    Suite,
    SuiteRun,
    TrafficProfile,
    derive_rng,
    run_integration_suite,
    run_production_traffic,
    run_synthetic_probe,
)
from .lifecycle import LifecycleManager, ShiftSchedule
from .metrics import MetricsRecorder, MetricsWindow
from .routing import preview_url, verify_ingress
from .store import ClonePolicy, CloneReport, ProductionStore, StagingManager, StoreRouter, TableSchema


class Simulation:
    """A loaded scenario: deterministic under (scenario file, master seed)."""

    def __init__(
        self,
        *,
        components: ComponentRegistry,
        schemas: Dict[str, TableSchema],
        secret: bytes,
        master_seed: int,
        slo,
        slo_window_ticks: int,
        clone_policy: Optional[ClonePolicy] = None,
        canary_policy: Optional[CanaryPolicy] = None,
        shift_schedule: Optional[ShiftSchedule] = None,
        retention_ticks: Optional[int] = None,
        high_risk: Optional[set] = None,
        auto_abort: bool = True,
        preproduction_ttl_ticks: Optional[int] = None,
        audit_path: Optional[str] = None,
        suites: Optional[Dict[str, Suite]] = None,
        pipeline_settings=None,
    ):
        self.clock = VirtualClock()
        self.components = components
        self.schemas = schemas
        self.secret = secret
        self.master_seed = master_seed
        self.slo = slo
        self.slo_window_ticks = slo_window_ticks
        self.clone_policy = clone_policy or ClonePolicy()
        self.pipeline_settings = pipeline_settings

        self.production = ProductionStore(schemas)
        self.staging = StagingManager()
        self.stores = StoreRouter(schemas, self.production, self.staging)
        self.metrics = MetricsRecorder()
        self.audit = AuditLog(path=audit_path)
        self.registry = DeployRegistry()
        self.events = EventBus()
        self.suites: Dict[str, Suite] = suites or {}

        kwargs = {}
        if retention_ticks is not None:
            kwargs["retention_ticks"] = retention_ticks
        self.lifecycle = LifecycleManager(
            components=self.components,
            registry=self.registry,
            metrics=self.metrics,
            audit=self.audit,
            clock=self.clock,
            canary_policy=canary_policy,
            shift_schedule=shift_schedule,
            high_risk=high_risk,
            budget_gate=lambda: self.current_budget().depleted,
            auto_abort=auto_abort,
            preproduction_ttl_ticks=preproduction_ttl_ticks,
            **kwargs,
        )
        self.mesh = Mesh(self.components, self.registry, self.stores, self.metrics)
        self.trace_log: List[Trace] = []
        self._serial = 0
        self._serial_lock = threading.Lock()

    # -- requests --------------------------------------------------------------

    def next_serial(self) -> int:
        with self._serial_lock:
            self._serial += 1
            return self._serial

    def verify(self, wire: Optional[str], trace_id: str = "", run_tag: Optional[str] = None) -> RequestContext:
        return verify_ingress(wire, self.secret, self.registry, trace_id, self.clock.now, run_tag)

    def issue_request(
        self,
        wire: Optional[str] = None,
        entry: Optional[str] = None,
        rng: Optional[random.Random] = None,
        trace_id: Optional[str] = None,
        run_tag: Optional[str] = None,
    ) -> Tuple[Response, Trace]:
        """Verify ingress, execute, and append the trace to the log."""
        if trace_id is None:
            trace_id = f"t{self.next_serial():08d}"
        ctx = self.verify(wire, trace_id, run_tag)
        if rng is None:
            rng = derive_rng(self.master_seed, "request", trace_id)
        response, trace = self.mesh.execute_request(ctx, rng, entry, self.clock.now)
        self.trace_log.append(trace)
        return response, trace

    def issue_production_request(self, entry: Optional[str] = None) -> Tuple[Response, Trace]:
        serial = self.next_serial()
        trace_id = f"t{serial:08d}"
        ctx = RequestContext(trace_id=trace_id, annotation=PRODUCTION_ANNOTATION,
                             testing=False, entry_tick=self.clock.now)
        rng = derive_rng(self.master_seed, "request", serial)
        response, trace = self.mesh.execute_request(ctx, rng, entry, self.clock.now)
        self.trace_log.append(trace)
        return response, trace

    # -- harness ---------------------------------------------------------------

    def run_traffic(self, profile: TrafficProfile, ticks: int) -> Dict[str, MetricsWindow]:
        return run_production_traffic(self, profile, ticks)

    def suite(self, suite_id: str) -> Suite:
        if suite_id not in self.suites:
            raise UnknownSuite(f"no suite '{suite_id}' in scenario")
        return self.suites[suite_id]

    def run_suite(self, suite_id: str, overrides: Dict[str, str], workers: int = 8) -> SuiteRun:
        return run_integration_suite(self, self.suite(suite_id), overrides, workers)

    def run_probes(self, suite_id: str, cadence_ticks: int, runs: int = 1) -> List[SuiteRun]:
        return run_synthetic_probe(self, self.suite(suite_id), cadence_ticks, runs)

    # -- staging / budget --------------------------------------------------------

    def clone_staging(self, date: Optional[int] = None, actor: str = "operator") -> CloneReport:
        date = self.clock.day if date is None else date
        report = self.staging.clone(self.production, self.schemas, self.clone_policy, date, self.master_seed)
        self.audit.append(
            AuditEntry(self.clock.now, actor, ACTION_CLONED, "", "", "", f"date={date} tables={len(report.tables)}")
        )
        return report

    def current_budget(self) -> ErrorBudget:
        start = max(0, self.clock.now - self.slo_window_ticks)
        series = self.metrics.tick_series(start, self.clock.now + 1)
        return check_error_budget(series, self.slo, self.slo_window_ticks)

    def preview(self, deploys: List[str]) -> str:
        nonce = derive_rng(self.master_seed, "preview", self.clock.now, *sorted(deploys)).getrandbits(64)
        return preview_url(deploys, self.secret, self.registry, issued_at=self.clock.now, nonce=nonce)

    # -- introspection -------------------------------------------------------------

    def trace_log_lines(self) -> str:
        return "\n".join(t.to_line() for t in self.trace_log)
