"""Synthetic traffic, parallel-safe integration suites, probes, and the event queue.

Suites are parallel safe by construction: every test allocates its own data
during setup (in the staging realm) and asserts only on its own ids and on
per-request responses, so any test can run concurrently with itself and with
any other test. Request randomness is keyed by (suite, test, step), never by
scheduling order, so concurrent runs produce the same outcomes as sequential
ones.
"""

from __future__ import annotations

import hashlib
import random
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from .annotations import RequestContext, RoutingAnnotation, sign_annotation, to_wire
from .errors import MeshSimError, NoStagingClone, UnknownTopic, ValidationError
from .components import ComponentKind
from .metrics import MetricsWindow
from .routing import resolve_route
from .store import Realm

DEFAULT_WORKERS = 8


def derive_rng(master_seed: int, *key: Any) -> random.Random:
    """Deterministic rng stream for a stable key, independent of call order."""
    material = f"{master_seed}:" + ":".join(str(k) for k in key)
    digest = hashlib.sha256(material.encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


# -- production traffic -------------------------------------------------------

@dataclass
class TrafficProfile:
    rate: int = 10  # requests per tick
    mix: List[Tuple[str, int]] = field(default_factory=list)  # (entry component, weight)
    seed: int = 0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValidationError("profile.rate", "rate must be positive")
        if self.mix and any(w <= 0 for _, w in self.mix):
            raise ValidationError("profile.mix", "mix weights must be positive")


def run_production_traffic(sim, profile: TrafficProfile, ticks: int) -> Dict[str, MetricsWindow]:
    """Drive `rate` unannotated requests per tick; returns per-deploy windows."""
    start = sim.clock.now
    mix = profile.mix or [(sim.components.gateway, 100)]
    total = sum(w for _, w in mix)
    mix_rng = derive_rng(sim.master_seed, "traffic-mix", profile.seed, start)
    for _ in range(ticks):
        for _ in range(profile.rate):
            point = mix_rng.randrange(total)
            cumulative = 0
            entry = mix[0][0]
            for candidate, weight in mix:
                cumulative += weight
                if point < cumulative:
                    entry = candidate
                    break
            sim.issue_production_request(entry)
        sim.clock.advance(1)
    end = sim.clock.now
    return {d: sim.metrics.window(d, start, end) for d in sim.metrics.deploys()}


# -- suite definitions --------------------------------------------------------

@dataclass
class SetupStep:
    kind: str  # "copy-fake" | "insert"
    table: str
    var: str
    row: Dict[str, Any] = field(default_factory=dict)


@dataclass
class StoreCheck:
    table: str
    id_ref: str  # "$var" or literal int as string
    realm: str  # "production" | "staging"
    exists: bool


@dataclass
class RequestStep:
    entry: Optional[str] = None
    expect_status: str = "ok"
    check_routing: bool = True
    expect_markers: Dict[str, str] = field(default_factory=dict)
    store_checks: List[StoreCheck] = field(default_factory=list)


@dataclass
class PublishStep:
    topic: str
    payload: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ConsumeStep:
    topic: str
    component: str
    expect_processed: Optional[int] = None


@dataclass
class TestCase:
    id: str
    setup: List[SetupStep] = field(default_factory=list)
    steps: List[Any] = field(default_factory=list)


@dataclass
class Suite:
    id: str
    tests: List[TestCase]

    def __post_init__(self):
        ids = [t.id for t in self.tests]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"suite.{self.id}", "duplicate test id")


def suite_from_dict(doc: Dict[str, Any], path: str = "suite") -> Suite:
    if "suite" not in doc:
        raise ValidationError(f"{path}.suite", "missing suite id")
    tests = []
    for i, tdoc in enumerate(doc.get("tests", [])):
        tpath = f"{path}.tests[{i}]"
        if "id" not in tdoc:
            raise ValidationError(f"{tpath}.id", "missing test id")
        setup = []
        for j, sdoc in enumerate(tdoc.get("setup", [])):
            spath = f"{tpath}.setup[{j}]"
            if "copy-fake" in sdoc:
                spec = sdoc["copy-fake"]
                setup.append(SetupStep(kind="copy-fake", table=spec["table"], var=spec["var"]))
            elif "insert" in sdoc:
                spec = sdoc["insert"]
                setup.append(SetupStep(kind="insert", table=spec["table"], var=spec["var"],
                                       row=spec.get("row", {})))
            else:
                raise ValidationError(spath, "setup step must be copy-fake or insert")
        steps: List[Any] = []
        for j, sdoc in enumerate(tdoc.get("steps", [])):
            spath = f"{tpath}.steps[{j}]"
            if "request" in sdoc:
                rdoc = sdoc.get("request") or {}
                expect = sdoc.get("expect", {})
                checks = [
                    StoreCheck(
                        table=c["table"],
                        id_ref=str(c["id"]),
                        realm=c.get("realm", "staging"),
                        exists=bool(c.get("exists", True)),
                    )
                    for c in sdoc.get("store", [])
                ]
                steps.append(
                    RequestStep(
                        entry=rdoc.get("entry"),
                        expect_status=expect.get("status", "ok"),
                        check_routing=bool(expect.get("routing", True)),
                        expect_markers=dict(expect.get("markers", {})),
                        store_checks=checks,
                    )
                )
            elif "publish" in sdoc:
                pdoc = sdoc["publish"]
                steps.append(PublishStep(topic=pdoc["topic"], payload=dict(pdoc.get("payload", {}))))
            elif "consume" in sdoc:
                cdoc = sdoc["consume"]
                steps.append(ConsumeStep(topic=cdoc["topic"], component=cdoc["component"],
                                         expect_processed=cdoc.get("expect")))
            else:
                raise ValidationError(spath, "step must be request, publish, or consume")
        tests.append(TestCase(id=tdoc["id"], setup=setup, steps=steps))
    return Suite(id=doc["suite"], tests=tests)


# -- suite execution ----------------------------------------------------------

@dataclass
class TestResult:
    test_id: str
    passed: bool
    failures: List[str] = field(default_factory=list)


@dataclass
class SuiteRun:
    suite_id: str
    started_tick: int
    results: List[TestResult] = field(default_factory=list)
    pass_count: int = 0
    fail_count: int = 0
    production_write_delta: int = 0


_run_seq = 0
_run_seq_lock = threading.Lock()


def _next_run_tag(suite_id: str) -> str:
    global _run_seq
    with _run_seq_lock:
        _run_seq += 1
        return f"{suite_id}#{_run_seq}"


def _expected_markers(sim, overrides: Dict[str, str], component: str) -> List[str]:
    deploy_id = overrides.get(component)
    if deploy_id is not None:
        return [sim.registry.get(deploy_id).behavior.marker]
    rule = sim.registry.rule(component)
    return [sim.registry.get(d).behavior.marker for d, w in rule.entries if w > 0]


def _resolve_id(id_ref: str, variables: Dict[str, int]) -> int:
    if id_ref.startswith("$"):
        name = id_ref[1:]
        if name not in variables:
            raise ValidationError("store.id", f"unknown setup variable '{name}'")
        return variables[name]
    return int(id_ref)


def _run_test(sim, suite: Suite, test: TestCase, overrides: Dict[str, str], run_tag: str) -> TestResult:
    failures: List[str] = []
    variables: Dict[str, int] = {}
    staging = replace(sim.stores.inspect(Realm.STAGING), testing=True, run_tag=run_tag)

    def topic_for(step) -> str:
        # Topics are private per test instance so a suite stays parallel safe
        # even against concurrent runs of itself.
        return f"{run_tag}:{test.id}:{step.topic}"

    try:
        for step in test.setup:
            if step.kind == "copy-fake":
                fake = sim.stores.fake_rows(staging, step.table)
                if not fake:
                    failures.append(f"setup: no fake rows in '{step.table}' to copy")
                    return TestResult(test.id, False, failures)
                schema = sim.stores.schemas[step.table]
                source = fake[min(fake)]
                row = {k: v for k, v in source.items() if k != schema.id_column}
                variables[step.var] = sim.stores.insert(staging, step.table, row)
            else:
                variables[step.var] = sim.stores.insert(staging, step.table, dict(step.row))
    except MeshSimError as exc:
        failures.append(f"setup: {exc}")
        return TestResult(test.id, False, failures)

    for index, step in enumerate(test.steps):
        label = f"step[{index}]"
        try:
            _run_step(sim, suite, test, overrides, run_tag, index, step, label, variables, failures, topic_for)
        except MeshSimError as exc:
            failures.append(f"{label}: {exc}")

    return TestResult(test.id, not failures, failures)


def _run_step(sim, suite, test, overrides, run_tag, index, step, label, variables, failures, topic_for) -> None:
    if isinstance(step, RequestStep):
        annotation = RoutingAnnotation(
            overrides=dict(overrides),
            staging=True,
            issued_at=sim.clock.now,
            nonce=derive_rng(sim.master_seed, "nonce", suite.id, test.id, index).getrandbits(64),
        )
        wire = to_wire(sign_annotation(annotation, sim.secret))
        rng = derive_rng(sim.master_seed, "suite", suite.id, test.id, index)
        response, _ = sim.issue_request(
            wire=wire,
            entry=step.entry,
            rng=rng,
            trace_id=f"{run_tag}:{test.id}:{index}",
            run_tag=run_tag,
        )
        if response.status != step.expect_status:
            failures.append(f"{label}: status {response.status}, expected {step.expect_status}")
        if step.check_routing and response.ok:
            for component, marker in response.markers.items():
                allowed = _expected_markers(sim, overrides, component)
                if marker not in allowed:
                    failures.append(f"{label}: marker '{marker}' at {component} not in {allowed}")
        for component, marker in step.expect_markers.items():
            got = response.markers.get(component)
            if got != marker:
                failures.append(f"{label}: marker at {component} is {got!r}, expected {marker!r}")
        for check in step.store_checks:
            row_id = _resolve_id(check.id_ref, variables)
            handle = sim.stores.inspect(Realm(check.realm))
            present = sim.stores.read(handle, check.table, row_id) is not None
            if present != check.exists:
                want = "present" if check.exists else "absent"
                failures.append(f"{label}: {check.realm}.{check.table}[{row_id}] should be {want}")
    elif isinstance(step, PublishStep):
        ctx = RequestContext(
            trace_id=f"{run_tag}:{test.id}:{index}",
            annotation=RoutingAnnotation(dict(overrides), True, sim.clock.now, 0).normalized(),
            testing=True,
            entry_tick=sim.clock.now,
            run_tag=run_tag,
        )
        sim.events.publish(topic_for(step), dict(step.payload), ctx)
    elif isinstance(step, ConsumeStep):
        processed = sim.events.consume(topic_for(step), step.component, sim)
        if step.expect_processed is not None and processed != step.expect_processed:
            failures.append(f"{label}: consumed {processed}, expected {step.expect_processed}")


def run_integration_suite(
    sim,
    suite: Suite,
    overrides: Dict[str, str],
    workers: int = DEFAULT_WORKERS,
) -> SuiteRun:
    """Run every test with signed annotations carrying the overrides, staging on."""
    for component, deploy_id in overrides.items():
        sim.registry.live_deploy(component, deploy_id)
    if sim.stores.staging.latest is None:
        raise NoStagingClone("run a staging clone before the integration suite")

    run_tag = _next_run_tag(suite.id)
    run = SuiteRun(suite_id=suite.id, started_tick=sim.clock.now)
    if workers <= 1:
        results = [_run_test(sim, suite, test, overrides, run_tag) for test in suite.tests]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: _run_test(sim, suite, t, overrides, run_tag), suite.tests))
    run.results = sorted(results, key=lambda r: r.test_id)
    run.pass_count = sum(1 for r in results if r.passed)
    run.fail_count = sum(1 for r in results if not r.passed)
    run.production_write_delta = sim.stores.production_writes_by_run.get(run_tag, 0)
    return run


def run_synthetic_probe(sim, suite: Suite, cadence_ticks: int, runs: int = 1,
                        workers: int = DEFAULT_WORKERS) -> List[SuiteRun]:
    """The same suite as a scheduled health probe: zero overrides, staging on."""
    out = []
    for _ in range(runs):
        out.append(run_integration_suite(sim, suite, overrides={}, workers=workers))
        sim.clock.advance(cadence_ticks)
    return out


# -- near-line events ---------------------------------------------------------

@dataclass
class EventEnvelope:
    topic: str
    payload: Dict[str, Any]
    annotation: RoutingAnnotation
    trace_id: str
    run_tag: Optional[str] = None


class EventBus:
    """Per-topic FIFO queue; envelopes carry the publisher's routing annotation."""

    def __init__(self):
        self._topics: Dict[str, deque] = {}
        self._lock = threading.Lock()

    def publish(self, topic: str, payload: Dict[str, Any], ctx: RequestContext) -> None:
        envelope = EventEnvelope(
            topic=topic,
            payload=payload,
            annotation=ctx.annotation,
            trace_id=ctx.trace_id,
            run_tag=ctx.run_tag,
        )
        with self._lock:
            self._topics.setdefault(topic, deque()).append(envelope)

    def pending(self, topic: str) -> int:
        with self._lock:
            queue = self._topics.get(topic)
            return len(queue) if queue else 0

    def consume(self, topic: str, consumer_component: str, sim) -> int:
        """Process all queued events with the deploy/store the envelope selects."""
        spec = sim.components.get(consumer_component)
        if spec.kind is not ComponentKind.NEARLINE_CONSUMER:
            raise ValidationError("consume.component", f"'{consumer_component}' is not a nearline consumer")
        with self._lock:
            if topic not in self._topics:
                raise UnknownTopic(f"no such topic '{topic}'")
            queue = self._topics[topic]
            batch = list(queue)
            queue.clear()

        processed = 0
        for envelope in batch:
            ctx = RequestContext(
                trace_id=f"{envelope.trace_id}>{consumer_component}",
                annotation=envelope.annotation,
                testing=envelope.annotation.is_testing,
                entry_tick=sim.clock.now,
                run_tag=envelope.run_tag,
            )
            rng = derive_rng(sim.master_seed, "event", topic, envelope.trace_id, processed)
            rule = sim.registry.rule(consumer_component)
            deploy_id = resolve_route(consumer_component, ctx, rule, rng)
            record = sim.registry.get(deploy_id)
            if spec.tables:
                handle = sim.stores.resolve_store(ctx, (consumer_component, record.state))
                for table in spec.tables:
                    sim.stores.count(handle, table)
                for table in spec.writes:
                    row = {}
                    schema = sim.stores.schemas[table]
                    for col in schema.data_columns():
                        if col.type.value == "string":
                            row[col.name] = f"{consumer_component}:{envelope.trace_id}"
                    if schema.fake_column is not None:
                        row[schema.fake_column] = False
                    sim.stores.insert(handle, table, row)
            if not ctx.testing:
                sim.metrics.record(deploy_id, sim.clock.now, record.behavior.latency_mean, False)
            processed += 1
        return processed
