"""Simulated request execution: a depth-first walk of the component graph.

Each hop resolves its serving deploy against the current rule snapshot, draws
latency and an error outcome from that deploy's behavior, and touches the
store realm the context dictates. A hop error short-circuits that hop's
descendants and marks the whole response as an error.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .annotations import RequestContext
from .components import ComponentRegistry
from .deploys import DeployRegistry
from .errors import AccessDenied, NoStagingClone
from .metrics import MetricsRecorder
from .routing import resolve_route
from .store import Realm, StoreHandle, StoreRouter

STORE_NONE = "none"


@dataclass
class Hop:
    component: str
    deploy: str
    store_used: str  # "production" | "staging" | "none"
    latency_ms: float
    outcome: str  # "ok" | "error"


@dataclass
class Trace:
    trace_id: str
    hops: List[Hop] = field(default_factory=list)

    def to_line(self) -> str:
        return json.dumps(
            {
                "trace": self.trace_id,
                "hops": [
                    [h.component, h.deploy, h.store_used, round(h.latency_ms, 3), h.outcome] for h in self.hops
                ],
            },
            separators=(",", ":"),
        )


@dataclass
class Response:
    status: str  # "ok" | "error"
    markers: Dict[str, str] = field(default_factory=dict)
    error_component: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class Mesh:
    """Request execution over the component graph, rules, stores, and metrics."""

    def __init__(
        self,
        components: ComponentRegistry,
        registry: DeployRegistry,
        stores: StoreRouter,
        metrics: MetricsRecorder,
    ):
        self.components = components
        self.registry = registry
        self.stores = stores
        self.metrics = metrics

    def execute_request(
        self,
        ctx: RequestContext,
        rng: random.Random,
        entry: Optional[str] = None,
        now: int = 0,
    ) -> Tuple[Response, Trace]:
        entry_id = entry or self.components.gateway
        self.components.get(entry_id)
        trace = Trace(trace_id=ctx.trace_id)
        response = Response(status="ok")
        self._walk(entry_id, ctx, rng, trace, response, now)
        return response, trace

    def _walk(
        self,
        component_id: str,
        ctx: RequestContext,
        rng: random.Random,
        trace: Trace,
        response: Response,
        now: int,
    ) -> None:
        spec = self.components.get(component_id)
        rule = self.registry.rule(component_id)
        deploy_id = resolve_route(component_id, ctx, rule, rng)
        record = self.registry.get(deploy_id)
        behavior = record.behavior

        latency = behavior.latency_mean
        if behavior.latency_jitter:
            latency += (2 * rng.random() - 1) * behavior.latency_jitter
        latency = max(0.0, latency)

        store_used = STORE_NONE
        handle: Optional[StoreHandle] = None
        failed = False
        if spec.tables:
            try:
                handle = self.stores.resolve_store(ctx, (component_id, record.state))
                store_used = handle.realm.value
            except (AccessDenied, NoStagingClone):
                failed = True

        error_prob = behavior.error_prob_for(ctx.testing)
        if error_prob > 0:
            failed = (rng.random() < error_prob) or failed

        if not failed and handle is not None:
            for table in spec.tables:
                self.stores.count(handle, table)  # simulated read
            for table in spec.writes:
                self.stores.insert(handle, table, self._write_row(table, component_id, ctx))

        outcome = "error" if failed else "ok"
        trace.hops.append(Hop(component_id, deploy_id, store_used, latency, outcome))
        response.markers[component_id] = behavior.marker
        if not ctx.testing:
            self.metrics.record(deploy_id, now, latency, failed)

        if failed:
            response.status = "error"
            if response.error_component is None:
                response.error_component = component_id
            return  # descendants of a failed hop are skipped

        for child in spec.downstream:
            self._walk(child, ctx, rng, trace, response, now)

    def _write_row(self, table: str, component_id: str, ctx: RequestContext) -> Dict:
        schema = self.stores.schemas[table]
        row: Dict = {}
        for col in schema.data_columns():
            if col.type.value == "string":
                row[col.name] = f"{component_id}:{ctx.trace_id}"
            # other column types keep their defaults
        if schema.fake_column is not None:
            row[schema.fake_column] = False
        return row

    def store_handle_for(self, realm: Realm) -> StoreHandle:
        return self.stores.inspect(realm)
