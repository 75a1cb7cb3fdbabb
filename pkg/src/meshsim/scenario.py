"""Scenario files: everything a simulation run needs, validated with field paths.

A scenario declares the component graph with one initial release each, the
store schemas and seed rows (including fake-labeled fixtures), the clone and
canary policies, the shift schedule, SLO, shared ingress secret, master seed,
and the integration suites. The packaged default scenario is the canonical
example: one frontend bundle, a gateway fanning out to two services sharing a
backend, and a nearline consumer.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional

import yaml

from .canary import CanaryPolicy
from .clock import TICKS_PER_DAY
from .components import ComponentKind, ComponentRegistry, ComponentSpec
from .deploys import VersionBehavior
from .errors import SchemaViolation, ValidationError
from .harness import Suite, suite_from_dict
from .lifecycle import MAIN_BRANCH, ShiftSchedule
from .sim import Simulation
from .store import ClonePolicy, ColumnSpec, ColumnTag, ColumnType, Realm, StoreHandle, TableSchema


@dataclass
class ReleaseSpec:
    component: str
    version: str
    commit: str
    behavior: VersionBehavior


@dataclass
class PipelineSettings:
    rate: int = 20
    canary_percent: int = 10
    canary_ticks: int = 100
    step_ticks: int = 300
    verify_ticks: int = 50


@dataclass
class ScenarioConfig:
    name: str
    secret: bytes
    seed: int
    slo: str
    slo_window_ticks: int
    components: List[ComponentSpec]
    schemas: Dict[str, TableSchema]
    releases: List[ReleaseSpec]
    seed_data: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    clone_policy: ClonePolicy = field(default_factory=ClonePolicy)
    canary_policy: CanaryPolicy = field(default_factory=CanaryPolicy)
    shift_schedule: Optional[ShiftSchedule] = None
    retention_ticks: Optional[int] = None
    high_risk: List[str] = field(default_factory=list)
    auto_abort: bool = True
    preproduction_ttl_ticks: Optional[int] = None
    suites: Dict[str, Suite] = field(default_factory=dict)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)


def _require(doc: Dict[str, Any], key: str, path: str) -> Any:
    if key not in doc:
        raise ValidationError(f"{path}.{key}", "missing required field")
    return doc[key]


def _parse_schema(doc: Dict[str, Any], path: str) -> TableSchema:
    name = _require(doc, "name", path)
    columns = []
    for i, cdoc in enumerate(doc.get("columns", [])):
        cpath = f"{path}.columns[{i}]"
        try:
            columns.append(
                ColumnSpec(
                    name=_require(cdoc, "name", cpath),
                    type=ColumnType(cdoc.get("type", "string")),
                    tag=ColumnTag(cdoc.get("tag", "none")),
                )
            )
        except ValueError as exc:
            raise ValidationError(cpath, str(exc)) from None
    try:
        return TableSchema(
            name=name,
            columns=columns,
            id_column=doc.get("id_column", "id"),
            fake_column=doc.get("fake_column"),
            owner=doc.get("owner"),
        )
    except ValidationError:
        raise
    except Exception as exc:
        raise ValidationError(path, str(exc)) from None


def _parse_behavior(doc: Dict[str, Any], path: str) -> VersionBehavior:
    testing_error = doc.get("testing_error_prob")
    try:
        return VersionBehavior(
            latency_mean=float(doc.get("latency_mean", 10.0)),
            latency_jitter=float(doc.get("latency_jitter", 0.0)),
            error_prob=float(doc.get("error_prob", 0.0)),
            marker=str(doc.get("marker", "")),
            testing_error_prob=None if testing_error is None else float(testing_error),
        )
    except ValidationError as exc:
        raise ValidationError(f"{path}.{exc.path}", exc.message) from None


def parse_scenario(doc: Dict[str, Any], base_dir: Optional[str] = None) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ValidationError("scenario", "scenario file must be a mapping")
    secret = _require(doc, "secret", "scenario")
    if not secret:
        raise ValidationError("scenario.secret", "secret must be non-empty")

    schemas: Dict[str, TableSchema] = {}
    for i, sdoc in enumerate(doc.get("schema", [])):
        schema = _parse_schema(sdoc, f"scenario.schema[{i}]")
        if schema.name in schemas:
            raise ValidationError(f"scenario.schema[{i}]", f"duplicate table '{schema.name}'")
        schemas[schema.name] = schema

    components: List[ComponentSpec] = []
    for i, cdoc in enumerate(doc.get("components", [])):
        cpath = f"scenario.components[{i}]"
        try:
            kind = ComponentKind(_require(cdoc, "kind", cpath))
        except ValueError as exc:
            raise ValidationError(f"{cpath}.kind", str(exc)) from None
        components.append(
            ComponentSpec(
                id=_require(cdoc, "id", cpath),
                kind=kind,
                downstream=list(cdoc.get("downstream", [])),
                tables=list(cdoc.get("tables", [])),
                writes=list(cdoc.get("writes", [])),
            )
        )
    component_ids = {c.id for c in components}

    releases: List[ReleaseSpec] = []
    released_components = set()
    for i, rdoc in enumerate(doc.get("releases", [])):
        rpath = f"scenario.releases[{i}]"
        component = _require(rdoc, "component", rpath)
        if component not in component_ids:
            raise ValidationError(f"{rpath}.component", f"unknown component '{component}'")
        if component in released_components:
            raise ValidationError(rpath, f"component '{component}' already has a released version")
        if rdoc.get("branch", MAIN_BRANCH) != MAIN_BRANCH:
            raise ValidationError(f"{rpath}.branch", "initial releases must come from the main branch")
        released_components.add(component)
        releases.append(
            ReleaseSpec(
                component=component,
                version=str(_require(rdoc, "version", rpath)),
                commit=str(rdoc.get("commit", "")),
                behavior=_parse_behavior(rdoc.get("behavior", {}), f"{rpath}.behavior"),
            )
        )
    missing = component_ids - released_components
    if missing:
        raise ValidationError("scenario.releases", f"components without a release: {sorted(missing)}")

    ComponentRegistry(components, table_names=set(schemas))  # topology must validate at load

    seed_data = doc.get("seed_data", {})
    for table in seed_data:
        if table not in schemas:
            raise ValidationError(f"scenario.seed_data.{table}", "unknown table")

    suites: Dict[str, Suite] = {}
    for i, ref in enumerate(doc.get("suites", [])):
        spath = f"scenario.suites[{i}]"
        if isinstance(ref, str):
            suite_path = ref if os.path.isabs(ref) or base_dir is None else os.path.join(base_dir, ref)
            try:
                with open(suite_path, encoding="utf-8") as fh:
                    suite_doc = yaml.safe_load(fh)
            except OSError as exc:
                raise ValidationError(spath, f"cannot read suite file: {exc}") from None
            suite = suite_from_dict(suite_doc, path=spath)
        elif isinstance(ref, dict):
            suite = suite_from_dict(ref, path=spath)
        else:
            raise ValidationError(spath, "suite must be a path or an inline mapping")
        if suite.id in suites:
            raise ValidationError(spath, f"duplicate suite id '{suite.id}'")
        _validate_suite_refs(suite, component_ids, set(schemas), spath)
        suites[suite.id] = suite

    for i, cid in enumerate(doc.get("high_risk", [])):
        if cid not in component_ids:
            raise ValidationError(f"scenario.high_risk[{i}]", f"unknown component '{cid}'")

    sched_doc = doc.get("shift_schedule")
    shift_schedule = None
    if sched_doc is not None:
        shift_schedule = ShiftSchedule(
            steps=list(sched_doc.get("steps", [25, 50, 75, 100])),
            hold_ticks=int(sched_doc.get("hold_ticks", 300)),
        )

    canary_doc = doc.get("canary_policy", {})
    canary_policy = CanaryPolicy(
        initial_percents=tuple(canary_doc.get("initial_percents", (1, 10))),
        min_samples=int(canary_doc.get("min_samples", 100)),
        error_delta_abs=float(canary_doc.get("error_delta_abs", 0.005)),
        latency_quantile=float(canary_doc.get("latency_quantile", 0.99)),
        latency_delta_rel=float(canary_doc.get("latency_delta_rel", 0.2)),
        significance=float(canary_doc.get("significance", 3.0)),
    )

    clone_doc = doc.get("clone_policy", {})
    clone_kwargs: Dict[str, Any] = {
        "cadence_ticks": int(clone_doc.get("cadence_ticks", 86400)),
        "offset_gap": int(clone_doc.get("offset_gap", 1_000_000)),
        "jitter_range": int(clone_doc.get("jitter_range", 100_000)),
        "include_tables": clone_doc.get("include_tables"),
    }
    if "transforms" in clone_doc:
        transforms = dict(ClonePolicy().transforms)
        for tag, action in clone_doc["transforms"].items():
            try:
                transforms[ColumnTag(tag)] = action
            except ValueError:
                raise ValidationError(f"scenario.clone_policy.transforms.{tag}", "unknown column tag") from None
        clone_kwargs["transforms"] = transforms
    clone_policy = ClonePolicy(**clone_kwargs)

    pipe_doc = doc.get("pipeline", {})
    pipeline = PipelineSettings(
        rate=int(pipe_doc.get("rate", 20)),
        canary_percent=int(pipe_doc.get("canary_percent", 10)),
        canary_ticks=int(pipe_doc.get("canary_ticks", 100)),
        step_ticks=int(pipe_doc.get("step_ticks", 300)),
        verify_ticks=int(pipe_doc.get("verify_ticks", 50)),
    )

    window_days = doc.get("slo_window_days", 30)

    return ScenarioConfig(
        name=str(doc.get("name", "scenario")),
        secret=str(secret).encode("utf-8"),
        seed=int(doc.get("seed", 0)),
        slo=str(doc.get("slo", "0.9995")),
        slo_window_ticks=int(doc.get("slo_window_ticks", window_days * TICKS_PER_DAY)),
        components=components,
        schemas=schemas,
        releases=releases,
        seed_data=seed_data,
        clone_policy=clone_policy,
        canary_policy=canary_policy,
        shift_schedule=shift_schedule,
        retention_ticks=doc.get("retention_ticks"),
        high_risk=list(doc.get("high_risk", [])),
        auto_abort=bool(doc.get("auto_abort", True)),
        preproduction_ttl_ticks=doc.get("preproduction_ttl_ticks"),
        suites=suites,
        pipeline=pipeline,
    )


def _validate_suite_refs(suite: Suite, component_ids: set, table_names: set, path: str) -> None:
    for test in suite.tests:
        for step in test.setup:
            if step.table not in table_names:
                raise ValidationError(f"{path}.{test.id}", f"unknown table '{step.table}'")
        for step in test.steps:
            entry = getattr(step, "entry", None)
            if entry is not None and entry not in component_ids:
                raise ValidationError(f"{path}.{test.id}", f"unknown entry component '{entry}'")
            consumer = getattr(step, "component", None)
            if consumer is not None and consumer not in component_ids:
                raise ValidationError(f"{path}.{test.id}", f"unknown consumer component '{consumer}'")
            for check in getattr(step, "store_checks", []):
                if check.table not in table_names:
                    raise ValidationError(f"{path}.{test.id}", f"unknown table '{check.table}'")
                if check.realm not in ("production", "staging"):
                    raise ValidationError(f"{path}.{test.id}", f"bad realm '{check.realm}'")


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return parse_scenario(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def default_scenario_path() -> str:
    return str(resources.files("meshsim.data") / "default-scenario.yaml")


def load_default_scenario() -> ScenarioConfig:
    return load_scenario(default_scenario_path())


def build_simulation(config: ScenarioConfig, audit_path: Optional[str] = None) -> Simulation:
    """Materialize a scenario: registry, stores with seed rows, initial releases."""
    registry = ComponentRegistry(config.components, table_names=set(config.schemas))
    sim = Simulation(
        components=registry,
        schemas=config.schemas,
        secret=config.secret,
        master_seed=config.seed,
        slo=config.slo,
        slo_window_ticks=config.slo_window_ticks,
        clone_policy=config.clone_policy,
        canary_policy=config.canary_policy,
        shift_schedule=config.shift_schedule,
        retention_ticks=config.retention_ticks,
        high_risk=set(config.high_risk),
        auto_abort=config.auto_abort,
        preproduction_ttl_ticks=config.preproduction_ttl_ticks,
        audit_path=audit_path,
        suites=config.suites,
        pipeline_settings=config.pipeline,
    )
    handle = StoreHandle(realm=Realm.PRODUCTION)
    for table, rows in config.seed_data.items():
        schema = config.schemas[table]
        for i, row in enumerate(rows):
            converted = dict(row)
            for col in schema.data_columns():
                if col.type is ColumnType.BLOB and isinstance(converted.get(col.name), str):
                    converted[col.name] = converted[col.name].encode("utf-8")
            try:
                sim.stores.insert(handle, table, converted)
            except SchemaViolation as exc:
                raise ValidationError(f"scenario.seed_data.{table}[{i}]", str(exc)) from None
    for release in config.releases:
        sim.lifecycle.bootstrap_release(
            release.component, release.version, release.commit, release.behavior
        )
    return sim


def load_simulation(path: Optional[str] = None, audit_path: Optional[str] = None) -> Simulation:
    config = load_scenario(path) if path else load_default_scenario()
    return build_simulation(config, audit_path=audit_path)
