"""Exception types shared across the simulator."""

from __future__ import annotations


class MeshSimError(Exception):
    """Base class for all simulator errors."""


class ValidationError(MeshSimError):
    """A config or input failed validation. `path` points at the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


# -- ingress / routing ------------------------------------------------------

class BadSignature(MeshSimError):
    """Annotation tag does not verify; the request must be rejected."""


class UnknownDeploy(MeshSimError):
    def __init__(self, component: str, deploy: str, reason: str = "unknown or retired"):
        scope = f"'{deploy}' of '{component}'" if component and component != "?" else f"'{deploy}'"
        super().__init__(f"deploy {scope}: {reason}")
        self.component = component
        self.deploy = deploy


class UnknownComponent(MeshSimError):
    pass


class NoLiveDeploy(MeshSimError):
    """Traffic rule has no positive-weight entry for a non-overridden component."""


# -- lifecycle --------------------------------------------------------------

class IllegalTransition(MeshSimError):
    pass


class NotTested(MeshSimError):
    pass


class NotMainBranch(MeshSimError):
    pass


class BudgetDepleted(MeshSimError):
    pass


class CanaryPercentNotAllowed(MeshSimError):
    pass


class RolloutInFlight(MeshSimError):
    """Another deploy of the component is already in Canary or Shifting."""


class MetricsRegression(MeshSimError):
    def __init__(self, verdict):
        super().__init__(f"canary regression: {', '.join(verdict.reasons)}")
        self.verdict = verdict


class InsufficientSamples(MeshSimError):
    pass


class HoldNotElapsed(MeshSimError):
    pass


class ScheduleExhausted(MeshSimError):
    pass


class NotAtFullWeight(MeshSimError):
    pass


class NoPredecessor(MeshSimError):
    pass


# -- store ------------------------------------------------------------------

class CloneInProgress(MeshSimError):
    pass


class NoStagingClone(MeshSimError):
    pass


class AccessDenied(MeshSimError):
    pass


class SchemaViolation(MeshSimError):
    pass


# -- harness ----------------------------------------------------------------

class UnknownTopic(MeshSimError):
    pass


class UnknownSuite(MeshSimError):
    pass
