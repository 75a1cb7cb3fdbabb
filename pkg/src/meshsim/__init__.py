"""meshsim: a deterministic desk-scale simulator of a service mesh with
preproduction deploys, signed routing annotations, staging databases, canary
analysis, blue-green traffic shifting, and an operator control plane.
"""

from .annotations import (
    PRODUCTION_ANNOTATION,
    RequestContext,
    RoutingAnnotation,
    SignedAnnotation,
    decode_annotation,
    encode_annotation,
    from_wire,
    sign_annotation,
    to_wire,
    verify_tag,
)
from .budget import ErrorBudget, check_error_budget
from .canary import CanaryPolicy, CanaryVerdict, evaluate_canary, two_proportion_z
from .clock import VirtualClock
from .components import ComponentKind, ComponentRegistry, ComponentSpec
from .deploys import DeployRecord, DeployRegistry, DeployState, TestStatus, TrafficRule, VersionBehavior
from .errors import MeshSimError, ValidationError
from .execution import Mesh, Response, Trace
from .harness import (
    EventBus,
    Suite,
    SuiteRun,
    TestCase,
    TrafficProfile,
    run_integration_suite,
    run_production_traffic,
    run_synthetic_probe,
    suite_from_dict,
)
from .lifecycle import LifecycleManager, ShiftSchedule
from .metrics import LatencyHistogram, MetricsRecorder, MetricsWindow
from .pipeline import PipelineRun, run_pipeline
from .routing import preview_url, resolve_route, verify_ingress
from .scenario import (
    ScenarioConfig,
    build_simulation,
    load_default_scenario,
    load_scenario,
    load_simulation,
    parse_scenario,
)
from .sim import Simulation
from .store import (
    ClonePolicy,
    CloneReport,
    ColumnSpec,
    ColumnTag,
    ColumnType,
    PlainCache,
    ProductionStore,
    Realm,
    StagingAwareCache,
    StagingClone,
    StagingManager,
    StoreHandle,
    StoreRouter,
    TableSchema,
    clone_staging,
)

__version__ = "0.1.0"
