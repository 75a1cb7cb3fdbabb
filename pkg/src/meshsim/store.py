"""The production tabular store and its dated staging clones.

Staging clones are point-in-time snapshots of production with sensitive
columns transformed away and per-table id counters offset far above the
production range (varying per day), so ids allocated on the two sides can
never collide. Reads on a clone resolve overlay-then-base (copy-on-write);
production writes after the clone never appear in it.

Access rules follow the request context: staging contexts always get the
staging realm; deploys that are not serving production traffic are never
granted a production handle; owner-restricted tables only open for their
owning service.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Set, Tuple

from .annotations import RequestContext
from .deploys import DeployState, SERVING_STATES
from .errors import AccessDenied, CloneInProgress, NoStagingClone, SchemaViolation, ValidationError

Row = Dict[str, Any]


class ColumnTag(str, Enum):
    PII_DIRECT = "pii-direct"
    PII_QUASI = "pii-quasi"
    SENSITIVE_FINANCIAL = "sensitive-financial"
    PASSWORD = "password"
    NONE = "none"


class ColumnType(str, Enum):
    INT = "int"
    STRING = "string"
    BOOL = "bool"
    BLOB = "blob"


_PY_TYPES = {
    ColumnType.INT: int,
    ColumnType.STRING: str,
    ColumnType.BOOL: bool,
    ColumnType.BLOB: bytes,
}

_ERASED = {
    ColumnType.INT: 0,
    ColumnType.STRING: "",
    ColumnType.BOOL: False,
    ColumnType.BLOB: b"",
}


@dataclass
class ColumnSpec:
    name: str
    type: ColumnType
    tag: ColumnTag = ColumnTag.NONE


@dataclass
class TableSchema:
    name: str
    columns: List[ColumnSpec]
    id_column: str = "id"
    fake_column: Optional[str] = None
    owner: Optional[str] = None  # sensitive table readable only by this service in production

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValidationError(f"schema.{self.name}", "duplicate column name")
        if self.id_column not in names:
            raise ValidationError(f"schema.{self.name}", f"id column '{self.id_column}' not among columns")
        if self.fake_column is not None:
            fake = self.column(self.fake_column)
            if fake is None or fake.type is not ColumnType.BOOL:
                raise ValidationError(f"schema.{self.name}", "fake-label column must be a bool column")

    def column(self, name: str) -> Optional[ColumnSpec]:
        for col in self.columns:
            if col.name == name:
                return col
        return None

    def data_columns(self) -> List[ColumnSpec]:
        return [c for c in self.columns if c.name != self.id_column]


class Realm(str, Enum):
    PRODUCTION = "production"
    STAGING = "staging"


@dataclass(frozen=True)
class StoreHandle:
    realm: Realm
    staging_date: Optional[int] = None
    owning_service: Optional[str] = None  # the component the handle was resolved for
    testing: bool = False
    run_tag: Optional[str] = None


@dataclass
class ClonePolicy:
    cadence_ticks: int = 86400
    offset_gap: int = 1_000_000
    jitter_range: int = 100_000
    include_tables: Optional[List[str]] = None  # None means all tables
    transforms: Dict[ColumnTag, str] = field(
        default_factory=lambda: {
            ColumnTag.PII_DIRECT: "randomize",
            ColumnTag.PII_QUASI: "keep",
            ColumnTag.SENSITIVE_FINANCIAL: "randomize",
            ColumnTag.PASSWORD: "erase",
            ColumnTag.NONE: "keep",
        }
    )

    def __post_init__(self):
        fixed = {
            ColumnTag.PII_DIRECT: ("randomize", "erase"),
            ColumnTag.PASSWORD: ("erase",),
            ColumnTag.SENSITIVE_FINANCIAL: ("randomize",),
            ColumnTag.NONE: ("keep",),
        }
        for tag, allowed in fixed.items():
            if self.transforms.get(tag) not in allowed:
                raise ValidationError(f"clone_policy.transforms.{tag.value}", f"must be one of {allowed}")
        if self.offset_gap < 0 or self.jitter_range < 0:
            raise ValidationError("clone_policy", "offset_gap and jitter_range must be >= 0")

    def includes(self, table: str) -> bool:
        return self.include_tables is None or table in self.include_tables


def _digest(*parts: Any) -> bytes:
    return hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()


def clone_jitter(seed: int, date: int, jitter_range: int) -> int:
    """Deterministic daily offset variation in [0, jitter_range)."""
    if jitter_range <= 0:
        return 0
    return int.from_bytes(_digest("jitter", seed, date)[:8], "big") % jitter_range


def randomize_value(value: Any, col: ColumnSpec, seed: int, date: int, table: str, row_id: int) -> Any:
    """Seeded pseudonym guaranteed to differ from the original value."""
    token = _digest("anon", seed, date, table, col.name, row_id).hex()[:12]
    if col.type is ColumnType.STRING:
        new = f"anon-{token}"
        return new if new != value else new + "~"
    if col.type is ColumnType.INT:
        new = int.from_bytes(_digest("anon-int", seed, date, table, col.name, row_id)[:6], "big")
        return new if new != value else new + 1
    if col.type is ColumnType.BOOL:
        return not value
    new = b"anon:" + token.encode()
    return new if new != value else new + b"~"


@dataclass
class CloneReport:
    date: int
    tables: Dict[str, Dict[str, Any]] = field(default_factory=dict)  # name -> {rows, offset, transforms}

    def as_dict(self) -> Dict[str, Any]:
        return {"date": self.date, "tables": self.tables}

    def render(self) -> str:
        lines = [f"staging clone for day {self.date}"]
        for name in sorted(self.tables):
            info = self.tables[name]
            tf = " ".join(f"{tag}={count}" for tag, count in sorted(info["transforms"].items()))
            lines.append(f"  {name}: rows={info['rows']} offset={info['offset']} {tf}".rstrip())
        return "\n".join(lines)


class _TableData:
    __slots__ = ("rows", "next_id")

    def __init__(self, next_id: int = 1):
        self.rows: Dict[int, Row] = {}
        self.next_id = next_id


class ProductionStore:
    """Per-table ordered maps with auto-increment ids. No query language."""

    def __init__(self, schemas: Dict[str, TableSchema]):
        self.schemas = schemas
        self._tables: Dict[str, _TableData] = {name: _TableData() for name in schemas}
        self._lock = threading.Lock()

    def _table(self, name: str) -> _TableData:
        if name not in self._tables:
            raise SchemaViolation(f"unknown table '{name}'")
        return self._tables[name]

    def allocate_id(self, table: str) -> int:
        data = self._table(table)
        with self._lock:
            new_id = data.next_id
            data.next_id += 1
        return new_id

    def put(self, table: str, row_id: int, row: Row) -> None:
        self._table(table).rows[row_id] = row

    def get(self, table: str, row_id: int) -> Optional[Row]:
        return self._table(table).rows.get(row_id)

    def delete(self, table: str, row_id: int) -> bool:
        return self._table(table).rows.pop(row_id, None) is not None

    def rows(self, table: str) -> Dict[int, Row]:
        return self._table(table).rows

    def max_id(self, table: str) -> int:
        rows = self._table(table).rows
        return max(rows) if rows else 0

    def count(self, table: str) -> int:
        return len(self._table(table).rows)


class StagingClone:
    """One day's staging database: transformed base snapshot plus a write overlay."""

    def __init__(self, date: int, included: Set[str]):
        self.date = date
        self.included = included
        self.base: Dict[str, Dict[int, Row]] = {}
        self.overlay: Dict[str, Dict[int, Row]] = {t: {} for t in included}
        self.tombstones: Set[Tuple[str, int]] = set()
        self.id_offsets: Dict[str, int] = {}
        self._next_id: Dict[str, int] = {}
        self._lock = threading.Lock()

    def _check(self, table: str) -> None:
        if table not in self.included:
            raise NoStagingClone(f"table '{table}' is not part of the staging clone")

    def allocate_id(self, table: str) -> int:
        self._check(table)
        with self._lock:
            new_id = self._next_id[table]
            self._next_id[table] = new_id + 1
        return new_id

    def put(self, table: str, row_id: int, row: Row) -> None:
        self._check(table)
        self.overlay[table][row_id] = row
        self.tombstones.discard((table, row_id))

    def get(self, table: str, row_id: int) -> Optional[Row]:
        self._check(table)
        if (table, row_id) in self.tombstones:
            return None
        if row_id in self.overlay[table]:
            return self.overlay[table][row_id]
        return self.base.get(table, {}).get(row_id)

    def delete(self, table: str, row_id: int) -> bool:
        self._check(table)
        existed = self.get(table, row_id) is not None
        self.overlay[table].pop(row_id, None)
        self.tombstones.add((table, row_id))
        return existed

    def rows(self, table: str) -> Dict[int, Row]:
        self._check(table)
        merged = dict(self.base.get(table, {}))
        merged.update(self.overlay[table])
        for t, row_id in self.tombstones:
            if t == table:
                merged.pop(row_id, None)
        return merged

    def count(self, table: str) -> int:
        return len(self.rows(table))


def clone_staging(
    production: ProductionStore,
    schemas: Dict[str, TableSchema],
    policy: ClonePolicy,
    date: int,
    jitter_seed: int,
    previous_offsets: Optional[Dict[str, int]] = None,
) -> Tuple[StagingClone, CloneReport]:
    """Snapshot production into a new staging clone for `date`.

    Every column is transformed per its tag; id counters start at
    max-production-id + gap + daily jitter, bumped by one if that would
    repeat the previous clone's offset for the table.
    """
    included = {name for name in schemas if policy.includes(name)}
    clone = StagingClone(date, included)
    report = CloneReport(date=date)
    jitter = clone_jitter(jitter_seed, date, policy.jitter_range)

    for name in included:
        schema = schemas[name]
        src = production.rows(name)
        transforms: Dict[str, int] = {}
        base: Dict[int, Row] = {}
        for row_id, row in src.items():
            out: Row = {}
            for col in schema.columns:
                action = policy.transforms.get(col.tag, "keep")
                value = row.get(col.name)
                if col.name == schema.id_column or action == "keep":
                    out[col.name] = value
                elif action == "erase":
                    out[col.name] = _ERASED[col.type]
                    transforms[col.tag.value] = transforms.get(col.tag.value, 0) + 1
                else:  # randomize
                    out[col.name] = randomize_value(value, col, jitter_seed, date, name, row_id)
                    transforms[col.tag.value] = transforms.get(col.tag.value, 0) + 1
            base[row_id] = out
        clone.base[name] = base

        offset = production.max_id(name) + policy.offset_gap + jitter
        if previous_offsets and previous_offsets.get(name) == offset:
            offset += 1  # starting points must differ day over day
        clone.id_offsets[name] = offset
        clone._next_id[name] = offset
        report.tables[name] = {"rows": len(base), "offset": offset, "transforms": transforms}

    return clone, report


class StagingManager:
    """Holds dated clones; cloning is exclusive per date, old clones stay readable."""

    def __init__(self):
        self._clones: Dict[int, StagingClone] = {}
        self._reports: Dict[int, CloneReport] = {}
        self._lock = threading.Lock()

    def clone(
        self,
        production: ProductionStore,
        schemas: Dict[str, TableSchema],
        policy: ClonePolicy,
        date: int,
        jitter_seed: int,
    ) -> CloneReport:
        with self._lock:
            if date in self._clones:
                raise CloneInProgress(f"staging clone for day {date} already exists")
            previous = self._clones.get(date - 1) or (self._clones[max(self._clones)] if self._clones else None)
            prev_offsets = previous.id_offsets if previous else None
            clone, report = clone_staging(production, schemas, policy, date, jitter_seed, prev_offsets)
            self._clones[date] = clone
            self._reports[date] = report
        return report

    @property
    def latest(self) -> Optional[StagingClone]:
        with self._lock:
            if not self._clones:
                return None
            return self._clones[max(self._clones)]

    def clone_for(self, date: int) -> StagingClone:
        clone = self._clones.get(date)
        if clone is None:
            raise NoStagingClone(f"no staging clone for day {date}")
        return clone

    def latest_report(self) -> Optional[CloneReport]:
        with self._lock:
            if not self._reports:
                return None
            return self._reports[max(self._reports)]


class StoreRouter:
    """Per-request store selection plus schema-checked CRUD on both realms.

    Write counters attribute production writes to testing contexts and suite
    runs; a correct system keeps both at zero for all test traffic.
    """

    def __init__(self, schemas: Dict[str, TableSchema], production: ProductionStore, staging: StagingManager):
        self.schemas = schemas
        self.production = production
        self.staging = staging
        self._lock = threading.Lock()
        self.production_writes = 0
        self.staging_writes = 0
        self.production_writes_testing = 0
        self.production_writes_by_run: Dict[str, int] = {}
        self.staging_writes_by_run: Dict[str, int] = {}

    # -- handle resolution ---------------------------------------------------

    def resolve_store(self, ctx: RequestContext, requesting: Tuple[str, DeployState]) -> StoreHandle:
        component, deploy_state = requesting
        if ctx.staging:
            clone = self.staging.latest
            if clone is None:
                raise NoStagingClone("no staging clone available for testing traffic")
            return StoreHandle(
                realm=Realm.STAGING,
                staging_date=clone.date,
                owning_service=component,
                testing=ctx.testing,
                run_tag=ctx.run_tag,
            )
        if deploy_state not in SERVING_STATES:
            raise AccessDenied(
                f"deploy of '{component}' in state {deploy_state.value} may not touch the production store"
            )
        return StoreHandle(realm=Realm.PRODUCTION, owning_service=component, testing=ctx.testing, run_tag=ctx.run_tag)

    def inspect(self, realm: Realm, staging_date: Optional[int] = None) -> StoreHandle:
        """Instrumentation handle for harness setup and assertions; not a service request."""
        if realm is Realm.STAGING:
            clone = self.staging.clone_for(staging_date) if staging_date is not None else self.staging.latest
            if clone is None:
                raise NoStagingClone("no staging clone available")
            return StoreHandle(realm=Realm.STAGING, staging_date=clone.date)
        return StoreHandle(realm=Realm.PRODUCTION)

    # -- CRUD -----------------------------------------------------------------

    def _schema(self, table: str) -> TableSchema:
        schema = self.schemas.get(table)
        if schema is None:
            raise SchemaViolation(f"unknown table '{table}'")
        return schema

    def _backend(self, handle: StoreHandle):
        if handle.realm is Realm.PRODUCTION:
            return self.production
        clone = (
            self.staging.clone_for(handle.staging_date) if handle.staging_date is not None else self.staging.latest
        )
        if clone is None:
            raise NoStagingClone("handle references no staging clone")
        return clone

    def _check_owner(self, handle: StoreHandle, schema: TableSchema) -> None:
        # Owner restriction applies to the production realm only: the staging
        # copy has had its sensitive fields randomized away.
        if handle.realm is Realm.PRODUCTION and schema.owner and handle.owning_service not in (None, schema.owner):
            raise AccessDenied(f"table '{schema.name}' is only accessible to '{schema.owner}'")

    def _validate_row(self, schema: TableSchema, row: Row) -> Row:
        out: Row = {}
        for key in row:
            if schema.column(key) is None:
                raise SchemaViolation(f"table '{schema.name}' has no column '{key}'")
        if schema.id_column in row:
            raise SchemaViolation(f"id column '{schema.id_column}' is allocated by the store")
        for col in schema.data_columns():
            if col.name in row:
                value = row[col.name]
                expected = _PY_TYPES[col.type]
                if not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
                    raise SchemaViolation(
                        f"table '{schema.name}' column '{col.name}' expects "
                        f"{col.type.value}, got {type(value).__name__}"
                    )
                out[col.name] = value
            else:
                out[col.name] = _ERASED[col.type]
        return out

    def _count_write(self, handle: StoreHandle) -> None:
        with self._lock:
            if handle.realm is Realm.PRODUCTION:
                self.production_writes += 1
                if handle.testing:
                    self.production_writes_testing += 1
                if handle.run_tag:
                    self.production_writes_by_run[handle.run_tag] = (
                        self.production_writes_by_run.get(handle.run_tag, 0) + 1
                    )
            else:
                self.staging_writes += 1
                if handle.run_tag:
                    self.staging_writes_by_run[handle.run_tag] = self.staging_writes_by_run.get(handle.run_tag, 0) + 1

    def insert(self, handle: StoreHandle, table: str, row: Row) -> int:
        schema = self._schema(table)
        self._check_owner(handle, schema)
        clean = self._validate_row(schema, row)
        backend = self._backend(handle)
        new_id = backend.allocate_id(table)
        clean[schema.id_column] = new_id
        backend.put(table, new_id, clean)
        self._count_write(handle)
        return new_id

    def read(self, handle: StoreHandle, table: str, row_id: int) -> Optional[Row]:
        schema = self._schema(table)
        self._check_owner(handle, schema)
        return self._backend(handle).get(table, row_id)

    def update(self, handle: StoreHandle, table: str, row_id: int, changes: Row) -> bool:
        schema = self._schema(table)
        self._check_owner(handle, schema)
        backend = self._backend(handle)
        current = backend.get(table, row_id)
        if current is None:
            return False
        for key, value in changes.items():
            col = schema.column(key)
            if col is None or key == schema.id_column:
                raise SchemaViolation(f"cannot update column '{key}' of '{table}'")
            if not isinstance(value, _PY_TYPES[col.type]):
                raise SchemaViolation(f"column '{key}' expects {col.type.value}")
        updated = dict(current)
        updated.update(changes)
        backend.put(table, row_id, updated)
        self._count_write(handle)
        return True

    def delete(self, handle: StoreHandle, table: str, row_id: int) -> bool:
        schema = self._schema(table)
        self._check_owner(handle, schema)
        deleted = self._backend(handle).delete(table, row_id)
        if deleted:
            self._count_write(handle)
        return deleted

    def count(self, handle: StoreHandle, table: str) -> int:
        schema = self._schema(table)
        self._check_owner(handle, schema)
        return self._backend(handle).count(table)

    def rows(self, handle: StoreHandle, table: str) -> Dict[int, Row]:
        schema = self._schema(table)
        self._check_owner(handle, schema)
        return self._backend(handle).rows(table)

    # -- fake-labeled static test data ---------------------------------------

    def seed_static_test_data(self, table: str, rows: List[Row]) -> List[int]:
        """Insert fake-labeled rows into PRODUCTION; later clones carry them along."""
        schema = self._schema(table)
        if schema.fake_column is None:
            raise SchemaViolation(f"table '{table}' has no fake-label column")
        handle = StoreHandle(realm=Realm.PRODUCTION)
        ids = []
        for row in rows:
            row = dict(row)
            row[schema.fake_column] = True
            ids.append(self.insert(handle, table, row))
        return ids

    def product_view(self, handle: StoreHandle, table: str) -> Dict[int, Row]:
        """Reads as the product would see them: fake-labeled rows are excluded."""
        schema = self._schema(table)
        rows = self.rows(handle, table)
        if schema.fake_column is None:
            return rows
        return {rid: row for rid, row in rows.items() if not row.get(schema.fake_column)}

    def fake_rows(self, handle: StoreHandle, table: str) -> Dict[int, Row]:
        schema = self._schema(table)
        if schema.fake_column is None:
            raise SchemaViolation(f"table '{table}' has no fake-label column")
        return {rid: row for rid, row in self.rows(handle, table).items() if row.get(schema.fake_column)}


class StagingAwareCache:
    """Cache whose keys are namespaced by realm and staging date."""

    def __init__(self):
        self._data: Dict[Tuple, Row] = {}
        self.hits = 0
        self.misses = 0

    def _key(self, handle: StoreHandle, table: str, row_id: int) -> Tuple:
        return (handle.realm.value, handle.staging_date, table, row_id)

    def get(self, handle: StoreHandle, table: str, row_id: int) -> Optional[Row]:
        value = self._data.get(self._key(handle, table, row_id))
        if value is None:
            self.misses += 1
        else:
            self.hits += 1
        return value

    def put(self, handle: StoreHandle, table: str, row_id: int, row: Row) -> None:
        self._data[self._key(handle, table, row_id)] = row


class PlainCache(StagingAwareCache):
    """Realm-oblivious cache: safe only because id ranges never collide."""

    def _key(self, handle: StoreHandle, table: str, row_id: int) -> Tuple:
        return (table, row_id)
