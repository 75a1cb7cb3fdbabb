"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they execute.
"""

from __future__ import annotations

import random
import threading
from fractions import Fraction

import pytest

from helpers import feed_clean_metrics, passing_run, random_lifecycle_op, tiny_manager
from meshsim.annotations import RoutingAnnotation, from_wire, sign_annotation, to_wire, verify_tag
from meshsim.audit import LIFECYCLE_ACTIONS
from meshsim.budget import check_error_budget
from meshsim.clock import TICKS_PER_DAY
from meshsim.deploys import DeployState, TrafficRule, VersionBehavior
from meshsim.errors import CanaryPercentNotAllowed, MeshSimError
from meshsim.harness import TrafficProfile, run_integration_suite, run_synthetic_probe
from meshsim.pipeline import run_pipeline
from meshsim.routing import resolve_route
from meshsim.scenario import build_simulation, load_default_scenario
from meshsim.store import ClonePolicy, ColumnTag, ProductionStore, Realm, StagingManager, StoreRouter


def report(criterion: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def scenario_config():
    return load_default_scenario()


def fresh_sim(scenario_config, clone: bool = True):
    sim = build_simulation(scenario_config)
    if clone:
        sim.clone_staging()
    return sim


# 1. Error-budget arithmetic ----------------------------------------------------

def test_error_budget_arithmetic():
    budget = check_error_budget([], "0.9995", 30 * TICKS_PER_DAY)
    minutes = budget.allowed_error_minutes
    ok = abs(float(minutes) - 21.6) <= 1e-6 and minutes == Fraction(108, 5)
    report("error-budget-arithmetic", ok, f"allowed={float(minutes)} min")


# 2. Canary weights ---------------------------------------------------------------

def test_canary_weights():
    # configured set only
    manager = tiny_manager()
    record = manager.create_deploy("svc", "v2", "main", "c", VersionBehavior())
    manager.record_test_result(record.id, passing_run())
    rejected = 0
    for bad in (0, 2, 5, 7, 25, 50, 99, 100):
        try:
            manager.start_canary(record.id, bad)
        except CanaryPercentNotAllowed:
            rejected += 1
    accepted = set()
    for good in (1, 10):
        m2 = tiny_manager()
        r2 = m2.create_deploy("svc", "v2", "main", "c", VersionBehavior())
        m2.record_test_result(r2.id, passing_run())
        rule = m2.start_canary(r2.id, good)
        accepted.add(rule.weight_of(r2.id))
    set_ok = rejected == 8 and accepted == {1, 10}

    # 1,000 randomized lifecycle sequences: every revision sums to 100
    rng = random.Random(11)
    revisions = 0
    violations = 0
    for _ in range(1000):
        manager = tiny_manager()
        seen = []
        original = manager.registry.set_rule

        def snoop(component, entries, _seen=seen, _orig=original):
            rule = _orig(component, entries)
            _seen.append(rule)
            return rule

        manager.registry.set_rule = snoop
        deploys = [manager.registry.released("svc").id]
        for _ in range(10):
            try:
                random_lifecycle_op(manager, rng, deploys, guided_prob=0.6)
            except MeshSimError:
                pass
        revisions += len(seen)
        violations += sum(1 for r in seen if sum(w for _, w in r.entries) != 100)
    report("canary-weights", set_ok and violations == 0,
           f"allowed set {{1,10}}, {revisions} revisions, {violations} weight violations")


# 3. Routing statistics ------------------------------------------------------------

def test_routing_statistics(scenario_config):
    sim = fresh_sim(scenario_config, clone=False)
    ctx = sim.verify(None)
    rule = TrafficRule("svc-a", (("d3", 90), ("dX", 10)), version=1)
    rng = random.Random(20260809)
    n = 100_000
    hits = sum(1 for _ in range(n) if resolve_route("svc-a", ctx, rule, rng) == "dX")
    fraction = hits / n
    stats_ok = abs(fraction - 0.10) <= 0.01

    new = sim.lifecycle.create_deploy("svc-a", "v43", "main", "c", VersionBehavior())
    token = to_wire(sign_annotation(RoutingAnnotation({"svc-a": new.id}, True), sim.secret))
    override_ctx = sim.verify(token)
    override_hits = sum(
        1 for _ in range(10_000) if resolve_route("svc-a", override_ctx, rule, rng) == new.id
    )
    report("routing-statistics", stats_ok and override_hits == 10_000,
           f"fraction={fraction:.4f}, override hits 10000/10000")


# 4. Gate soundness -----------------------------------------------------------------

def test_gate_soundness():
    rng = random.Random(20260811)
    violations = 0
    for i in range(10_000):
        manager = tiny_manager()
        deploys = [manager.registry.released("svc").id]
        guided = 0.4 if i % 2 else 0.0  # half pure chaos, half driven into deep states
        for _ in range(8):
            try:
                random_lifecycle_op(manager, rng, deploys, guided_prob=guided)
            except MeshSimError:
                pass
            for rule in manager.registry.rules().values():
                for deploy_id, weight in rule.entries:
                    if weight > 0:
                        record = manager.registry.get(deploy_id)
                        if record.test_status.value != "passed" or record.branch != "main":
                            violations += 1
    report("gate-soundness", violations == 0, f"10000 sequences, {violations} violations")


# 5. Isolation -------------------------------------------------------------------------

def test_isolation(scenario_config):
    sim = fresh_sim(scenario_config)
    suite = sim.suite("default")
    suite_runs = []
    errors = []

    def drive_suites():
        try:
            suite_runs.append(run_integration_suite(sim, suite, {}))
            suite_runs.extend(run_synthetic_probe(sim, suite, cadence_ticks=5, runs=3))
            suite_runs.append(run_integration_suite(sim, suite, {}))
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    worker = threading.Thread(target=drive_suites)
    worker.start()
    windows = sim.run_traffic(TrafficProfile(rate=100), ticks=100)  # 10,000 production requests
    worker.join()

    assert not errors, errors
    total_requests = windows["d2"].n
    deltas = [r.production_write_delta for r in suite_runs]
    ok = (
        total_requests == 10_000
        and all(d == 0 for d in deltas)
        and sim.stores.production_writes_testing == 0
        and all(r.fail_count == 0 for r in suite_runs)
    )
    report("isolation", ok,
           f"{total_requests} production requests beside {len(suite_runs)} suite/probe runs, "
           f"testing-context production writes={sim.stores.production_writes_testing}")


# 6. ID disjointness ---------------------------------------------------------------------

def test_id_disjointness(scenario_config):
    sim = fresh_sim(scenario_config)
    staging = sim.stores.inspect(Realm.STAGING)
    production = sim.stores.inspect(Realm.PRODUCTION)
    rng = random.Random(6)
    staging_ids, production_ids = set(), set()
    for i in range(20_000):  # 10,000 inserts per realm, interleaved
        row = {"user_ref": f"u{i}", "note": "x", "is_fake": False}
        if (i + rng.randrange(2)) % 2 == 0:
            staging_ids.add(sim.stores.insert(staging, "enrollments", row))
        else:
            production_ids.add(sim.stores.insert(production, "enrollments", row))
    production_ids |= set(sim.production.rows("enrollments"))
    disjoint = not (staging_ids & production_ids)

    # negative control: force a zero offset and watch the collision appear
    schemas = sim.schemas
    control_production = ProductionStore(schemas)
    control = StoreRouter(schemas, control_production, StagingManager())
    prod_handle = control.inspect(Realm.PRODUCTION)
    for i in range(5):
        control.insert(prod_handle, "enrollments", {"user_ref": f"u{i}", "note": "x", "is_fake": False})
    policy = ClonePolicy(offset_gap=0, jitter_range=0)
    control.staging.clone(control_production, schemas, policy, 0, 0)
    clone = control.staging.latest
    clone.id_offsets["enrollments"] = 1
    clone._next_id["enrollments"] = 1  # overlap the production id space on purpose
    stag_handle = control.inspect(Realm.STAGING)
    collided = set()
    for i in range(10):
        collided.add(control.insert(stag_handle, "enrollments",
                                    {"user_ref": f"s{i}", "note": "y", "is_fake": False}))
    collision_found = bool(collided & set(control_production.rows("enrollments")))
    report("id-disjointness", disjoint and collision_found,
           f"{len(staging_ids)} staging ids vs {len(production_ids)} production ids disjoint; "
           f"zero-offset control collides={collision_found}")


# 7. De-identification --------------------------------------------------------------------

def test_deidentification(scenario_config):
    sim = fresh_sim(scenario_config)
    staging = sim.stores.inspect(Realm.STAGING)
    production = sim.stores.inspect(Realm.PRODUCTION)
    checked = mismatches = kept = kept_bad = 0
    for table, schema in sim.schemas.items():
        prod_rows = sim.stores.rows(production, table)
        for rid, prod_row in prod_rows.items():
            staged = sim.stores.read(staging, table, rid)
            for col in schema.data_columns():
                if col.tag in (ColumnTag.PII_DIRECT, ColumnTag.PASSWORD):
                    checked += 1
                    if staged[col.name] == prod_row[col.name]:
                        mismatches += 1
                elif col.tag is ColumnTag.NONE:
                    kept += 1
                    if staged[col.name] != prod_row[col.name]:
                        kept_bad += 1

    report0 = sim.staging.latest_report()
    sim.clock.advance(TICKS_PER_DAY)
    report1 = sim.clone_staging()
    offsets_differ = all(
        report0.tables[t]["offset"] != report1.tables[t]["offset"] for t in report0.tables
    )
    ok = checked > 0 and mismatches == 0 and kept_bad == 0 and offsets_differ
    report("de-identification", ok,
           f"{checked} sensitive values transformed, {kept} kept byte-equal, "
           f"consecutive-day offsets differ={offsets_differ}")


# 8. Signature ---------------------------------------------------------------------------

def test_signature(scenario_config):
    sim = fresh_sim(scenario_config, clone=False)
    rng = random.Random(8)
    new = sim.lifecycle.create_deploy("svc-a", "v43", "main", "c", VersionBehavior())

    accepted_tampered = 0
    for i in range(10_000):
        annotation = RoutingAnnotation(
            overrides={"svc-a": new.id} if rng.random() < 0.5 else {},
            staging=rng.random() < 0.5,
            issued_at=rng.randrange(1000),
            nonce=rng.getrandbits(64),
        )
        signed = sign_annotation(annotation, sim.secret)
        tampered = bytearray(signed.payload)
        tampered[rng.randrange(len(tampered))] ^= 1 << rng.randrange(8)
        if verify_tag(bytes(tampered), signed.tag, sim.secret):
            accepted_tampered += 1

    valid_accepted = 0
    for i in range(1000):
        annotation = RoutingAnnotation(
            overrides={"svc-a": new.id}, staging=True, issued_at=i, nonce=rng.getrandbits(64)
        )
        token = to_wire(sign_annotation(annotation, sim.secret))
        signed = from_wire(token)
        if verify_tag(signed.payload, signed.tag, sim.secret):
            ctx = sim.verify(token)
            if ctx.overrides == {"svc-a": new.id}:
                valid_accepted += 1

    ok = accepted_tampered == 0 and valid_accepted == 1000
    report("signature", ok,
           f"tampered accepted {accepted_tampered}/10000, valid accepted {valid_accepted}/1000")


# 9. Pipeline end to end -------------------------------------------------------------------

def test_pipeline_end_to_end(scenario_config):
    sim = fresh_sim(scenario_config)
    healthy = run_pipeline(sim, "svc-a", "v2", "main", "feadbee",
                           VersionBehavior(latency_mean=12, latency_jitter=3, marker="a-v2"))
    actions = [e.action for e in sim.audit.entries
               if e.deploy == healthy.deploy and e.action in LIFECYCLE_ACTIONS]
    eight_step_order = actions == [
        "deploy.created", "deploy.testing", "deploy.tested", "canary.started",
        "shift.advanced", "shift.advanced", "shift.advanced", "shift.advanced",
        "release.finalized",
    ]
    old_retired = sim.registry.get("d3").state is DeployState.RETIRED

    sim2 = fresh_sim(scenario_config)
    degraded = run_pipeline(sim2, "svc-a", "v3", "main", "5badc0de",
                            VersionBehavior(error_prob=0.05, testing_error_prob=0.0, marker="a-v3"))
    halted = degraded.status == "halted-at(verify-canary)"
    restored = sim2.registry.rule("svc-a").entries == (("d3", 100),)

    ok = healthy.released and eight_step_order and old_retired and halted and restored
    report("pipeline-end-to-end", ok,
           f"healthy={healthy.status}, degraded={degraded.status}, old restored={restored}")


# 10. Abort and rollback ----------------------------------------------------------------------

def test_abort_rollback():
    # abort during shift
    manager = tiny_manager()
    old = manager.registry.released("svc")
    record = manager.create_deploy("svc", "v2", "main", "c2", VersionBehavior())
    manager.record_test_result(record.id, passing_run())
    manager.start_canary(record.id, 10)
    feed_clean_metrics(manager, record.id)
    manager.clock.advance(1)
    manager.advance_shift(record.id)  # at 25
    version_before = manager.registry.rule("svc").version
    rule = manager.abort(record.id)
    abort_ok = (
        rule.version == version_before + 1
        and rule.entries == ((old.id, 100),)
        and record.weight == 0
    )

    # rollback within retention
    manager2 = tiny_manager()
    old2 = manager2.registry.released("svc")
    record2 = manager2.create_deploy("svc", "v2", "main", "c2", VersionBehavior())
    manager2.record_test_result(record2.id, passing_run())
    manager2.start_canary(record2.id, 10)
    while record2.weight < 100:
        feed_clean_metrics(manager2, record2.id)
        manager2.clock.advance(1)
        manager2.advance_shift(record2.id)
    manager2.finalize_release(record2.id)
    version_before = manager2.registry.rule("svc").version
    rule2 = manager2.rollback("svc")
    rollback_ok = (
        rule2.version == version_before + 1
        and rule2.entries == ((old2.id, 100),)
        and old2.state is DeployState.RELEASED
        and manager2.registry.get(record2.id).state is DeployState.ABORTED
    )
    report("abort-rollback", abort_ok and rollback_ok,
           f"abort single-revision={abort_ok}, rollback single-revision={rollback_ok}")
