"""Component topology: the set of independently deployable pieces and their call graph."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set

from .errors import UnknownComponent, ValidationError


class ComponentKind(str, Enum):
    GATEWAY = "gateway"
    MESH_SERVICE = "mesh-service"
    NEARLINE_CONSUMER = "nearline-consumer"
    FRONTEND_BUNDLE = "frontend-bundle"


@dataclass
class ComponentSpec:
    id: str
    kind: ComponentKind
    downstream: List[str] = field(default_factory=list)
    tables: List[str] = field(default_factory=list)
    writes: List[str] = field(default_factory=list)


class ComponentRegistry:
    """Validated component graph.

    Structural rules: ids unique; exactly one gateway; downstream references
    resolve; the graph is acyclic; every mesh service is reachable from the
    gateway; frontend bundles may only call the gateway; nearline consumers
    sit outside the request path (driven by the event queue, never called).
    """

    def __init__(self, specs: Iterable[ComponentSpec], table_names: Optional[Set[str]] = None):
        self._specs: Dict[str, ComponentSpec] = {}
        for spec in specs:
            if spec.id in self._specs:
                raise ValidationError(f"components.{spec.id}", "duplicate component id")
            self._specs[spec.id] = spec
        self._gateway = self._validate(table_names)

    def _validate(self, table_names: Optional[Set[str]]) -> str:
        gateways = [c.id for c in self._specs.values() if c.kind is ComponentKind.GATEWAY]
        if len(gateways) != 1:
            raise ValidationError("components", f"expected exactly one gateway, found {len(gateways)}")
        gateway = gateways[0]

        called: Set[str] = set()
        for spec in self._specs.values():
            for dep in spec.downstream:
                if dep not in self._specs:
                    raise ValidationError(f"components.{spec.id}.downstream", f"unknown component '{dep}'")
                called.add(dep)
            if spec.kind is ComponentKind.NEARLINE_CONSUMER and spec.downstream:
                raise ValidationError(f"components.{spec.id}.downstream", "nearline consumers make no downstream calls")
            if spec.kind is ComponentKind.FRONTEND_BUNDLE and any(d != gateway for d in spec.downstream):
                raise ValidationError(f"components.{spec.id}.downstream", "frontend bundles may only call the gateway")
            if not set(spec.writes) <= set(spec.tables):
                raise ValidationError(f"components.{spec.id}.writes", "writes must be a subset of tables")
            if table_names is not None:
                for t in spec.tables:
                    if t not in table_names:
                        raise ValidationError(f"components.{spec.id}.tables", f"unknown table '{t}'")

        for spec in self._specs.values():
            if spec.kind is ComponentKind.NEARLINE_CONSUMER and spec.id in called:
                raise ValidationError(f"components.{spec.id}", "nearline consumers are not callable in the request path")

        self._check_acyclic()

        reachable = self.reachable_from(gateway)
        for spec in self._specs.values():
            if spec.kind is ComponentKind.MESH_SERVICE and spec.id not in reachable:
                raise ValidationError(f"components.{spec.id}", "mesh service not reachable from the gateway")
        return gateway

    def _check_acyclic(self) -> None:
        WHITE, GREY, BLACK = 0, 1, 2
        color = {cid: WHITE for cid in self._specs}

        def visit(cid: str) -> None:
            color[cid] = GREY
            for dep in self._specs[cid].downstream:
                if color[dep] == GREY:
                    raise ValidationError("components", f"cycle through '{dep}'")
                if color[dep] == WHITE:
                    visit(dep)
            color[cid] = BLACK

        for cid in self._specs:
            if color[cid] == WHITE:
                visit(cid)

    def reachable_from(self, root: str) -> Set[str]:
        seen: Set[str] = set()
        stack = [root]
        while stack:
            cid = stack.pop()
            if cid in seen:
                continue
            seen.add(cid)
            stack.extend(self._specs[cid].downstream)
        return seen

    @property
    def gateway(self) -> str:
        return self._gateway

    def get(self, component_id: str) -> ComponentSpec:
        try:
            return self._specs[component_id]
        except KeyError:
            raise UnknownComponent(component_id) from None

    def __contains__(self, component_id: str) -> bool:
        return component_id in self._specs

    def ids(self) -> List[str]:
        return list(self._specs)

    def all(self) -> List[ComponentSpec]:
        return list(self._specs.values())
