"""Routing annotations: the per-request metadata that steers test traffic.

An annotation names preproduction deploys to substitute for specific
components and/or raises the staging flag. Anything arriving from outside the
mesh is MAC-signed; a request whose tag does not verify is rejected outright,
never downgraded to production. The canonical payload encoding is byte-stable
so equal annotations always sign identically.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import BadSignature

# Payload field order is fixed: staging, issued_at, nonce, overrides (sorted).
_PAYLOAD_FIELDS = ("staging", "issued_at", "nonce", "overrides")


@dataclass(frozen=True)
class RoutingAnnotation:
    """Per-request routing overrides plus the staging flag.

    `overrides` maps component id -> deploy id. An annotation with overrides
    is always a staging annotation after normalization: test traffic must
    never touch production stores.
    """

    overrides: Mapping[str, str] = field(default_factory=dict)
    staging: bool = False
    issued_at: int = 0
    nonce: int = 0

    def normalized(self) -> "RoutingAnnotation":
        if self.overrides and not self.staging:
            return RoutingAnnotation(dict(self.overrides), True, self.issued_at, self.nonce)
        return self

    @property
    def is_testing(self) -> bool:
        return self.staging or bool(self.overrides)


PRODUCTION_ANNOTATION = RoutingAnnotation()


def encode_annotation(annotation: RoutingAnnotation) -> bytes:
    """Canonical byte serialization: fixed field order, sorted override keys."""
    doc = {
        "staging": bool(annotation.staging),
        "issued_at": int(annotation.issued_at),
        "nonce": int(annotation.nonce),
        "overrides": {k: annotation.overrides[k] for k in sorted(annotation.overrides)},
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def decode_annotation(payload: bytes) -> RoutingAnnotation:
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadSignature(f"payload is not a canonical annotation: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != set(_PAYLOAD_FIELDS):
        raise BadSignature("payload fields do not match the annotation schema")
    overrides = doc["overrides"]
    if not isinstance(overrides, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in overrides.items()
    ):
        raise BadSignature("overrides must map component ids to deploy ids")
    return RoutingAnnotation(
        overrides=dict(overrides),
        staging=bool(doc["staging"]),
        issued_at=int(doc["issued_at"]),
        nonce=int(doc["nonce"]),
    )


@dataclass(frozen=True)
class SignedAnnotation:
    payload: bytes
    tag: bytes


def sign_annotation(annotation: RoutingAnnotation, secret: bytes) -> SignedAnnotation:
    """MAC the canonical payload. HMAC-SHA256; tag is 256 bits."""
    if not secret:
        raise ValueError("secret must be non-empty")
    payload = encode_annotation(annotation)
    tag = hmac.new(secret, payload, hashlib.sha256).digest()
    return SignedAnnotation(payload=payload, tag=tag)


def verify_tag(payload: bytes, tag: bytes, secret: bytes) -> bool:
    expected = hmac.new(secret, payload, hashlib.sha256).digest()
    return hmac.compare_digest(expected, tag)


def _b64(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).decode("ascii").rstrip("=")


def _unb64(text: str) -> bytes:
    pad = "=" * (-len(text) % 4)
    return base64.b64decode((text + pad).replace("-", "+").replace("_", "/"), validate=True)


def to_wire(signed: SignedAnnotation) -> str:
    """Wire form used on headers and preview URLs: b64url(payload).b64url(tag)."""
    return f"{_b64(signed.payload)}.{_b64(signed.tag)}"


def from_wire(token: str) -> SignedAnnotation:
    try:
        payload_part, tag_part = token.split(".", 1)
        return SignedAnnotation(payload=_unb64(payload_part), tag=_unb64(tag_part))
    except ValueError as exc:  # missing separator or malformed base64
        raise BadSignature(f"malformed annotation token: {exc}") from exc


@dataclass
class RequestContext:
    """The verified, normalized routing state a request carries end to end.

    Invariant: testing == (annotation.staging or annotation has overrides).
    Production contexts carry no overrides and staging=False.
    """

    trace_id: str
    annotation: RoutingAnnotation
    testing: bool
    entry_tick: int
    run_tag: Optional[str] = None  # harness attribution (suite run id), not wire data

    @property
    def staging(self) -> bool:
        return self.annotation.staging

    @property
    def overrides(self) -> Mapping[str, str]:
        return self.annotation.overrides


def production_context(trace_id: str, tick: int) -> RequestContext:
    return RequestContext(trace_id=trace_id, annotation=PRODUCTION_ANNOTATION, testing=False, entry_tick=tick)
