"""Ingress verification and per-hop version selection."""

from __future__ import annotations

import random
from typing import Iterable, Optional

from .annotations import (
    PRODUCTION_ANNOTATION,
    RequestContext,
    RoutingAnnotation,
    SignedAnnotation,
    decode_annotation,
    from_wire,
    sign_annotation,
    to_wire,
    verify_tag,
)
from .deploys import DeployRegistry, TrafficRule
from .errors import BadSignature, NoLiveDeploy


def verify_ingress(
    raw: Optional[SignedAnnotation | str],
    secret: bytes,
    registry: DeployRegistry,
    trace_id: str = "",
    now: int = 0,
    run_tag: Optional[str] = None,
) -> RequestContext:
    """Turn an optional signed annotation into a verified request context.

    No annotation means plain production. A bad tag rejects the request —
    never a silent downgrade to production, which would route test writes at
    production stores. Overrides must name live deploys of their components;
    staging is forced on whenever overrides are present.
    """
    if raw is None:
        return RequestContext(trace_id=trace_id, annotation=PRODUCTION_ANNOTATION, testing=False,
                              entry_tick=now, run_tag=run_tag)
    signed = from_wire(raw) if isinstance(raw, str) else raw
    if not verify_tag(signed.payload, signed.tag, secret):
        raise BadSignature("annotation tag failed verification")
    annotation = decode_annotation(signed.payload).normalized()
    for component, deploy_id in annotation.overrides.items():
        registry.live_deploy(component, deploy_id)  # raises UnknownDeploy
    return RequestContext(
        trace_id=trace_id,
        annotation=annotation,
        testing=annotation.is_testing,
        entry_tick=now,
        run_tag=run_tag,
    )


def resolve_route(component: str, ctx: RequestContext, rule: TrafficRule, rng: random.Random) -> str:
    """Pick the deploy serving this hop.

    An override wins unconditionally and consumes no randomness; otherwise a
    weighted draw over the rule consumes exactly one rng value.
    """
    override = ctx.overrides.get(component)
    if override is not None:
        return override
    if all(w == 0 for _, w in rule.entries):
        raise NoLiveDeploy(f"rule v{rule.version} for '{component}' has no positive weight")
    point = rng.randrange(100)
    cumulative = 0
    for deploy_id, weight in rule.entries:
        cumulative += weight
        if point < cumulative:
            return deploy_id
    raise NoLiveDeploy(f"rule v{rule.version} for '{component}' is malformed")


def preview_url(
    deploys: Iterable[str],
    secret: bytes,
    registry: DeployRegistry,
    issued_at: int = 0,
    nonce: int = 0,
) -> str:
    """Signed token routing requests at the given deploys with staging on.

    Feeding the token back through verify_ingress reconstructs the context;
    once a named deploy retires, verification rejects the token.
    """
    overrides = {}
    for deploy_id in deploys:
        record = registry.get(deploy_id)
        registry.live_deploy(record.component, deploy_id)
        overrides[record.component] = deploy_id
    annotation = RoutingAnnotation(overrides=overrides, staging=True, issued_at=issued_at, nonce=nonce)
    return to_wire(sign_annotation(annotation, secret))
