"""Pipeline graph model: tool contracts, typed ports, validation, topo order.

The canonical pipeline file format is UTF-8 JSON with sorted keys and no
insignificant whitespace:

    {"version":1,"name":...,"nodes":[{"id":...,"tool":"<id>@<ver>","params":{...}}],
     "edges":[{"from":"<id>.<port>","to":"<id>.<port>"}],"metadata":{...}}

Nodes are canonically ordered by id and edges by (from, to), so equal logical
graphs hash equally. UI state lives under metadata["ui"] and is excluded from
the logical hash, keeping run identity position-independent.
"""

from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .store import sha256_hex
from .values import SemanticType, canonical_json_bytes, compatible

PIPELINE_FORMAT_VERSION = 1

_TOOL_ID_RE = re.compile(r"^[a-z][a-z0-9_]*(\.[a-z][a-z0-9_]*)+$")
_VERSION_RE = re.compile(r"^\d+\.\d+\.\d+$")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")


class Direction(str, Enum):
    IN = "In"
    OUT = "Out"


class ToolCategory(str, Enum):
    INPUT = "Input"
    PRE_PROCESS = "PreProcess"
    AUGMENT = "Augment"
    MODEL = "Model"
    POST_PROCESS = "PostProcess"
    METRIC = "Metric"
    VISUALIZE = "Visualize"
    DATASET_MGMT = "DatasetMgmt"


@dataclass(frozen=True)
class ResourceRequest:
    cpu_cores: int = 0
    gpus: int = 0
    mem_mb: int = 0

    def fits_within(self, other: ResourceRequest) -> bool:
        return (
            self.cpu_cores <= other.cpu_cores
            and self.gpus <= other.gpus
            and self.mem_mb <= other.mem_mb
        )

    def plus(self, other: ResourceRequest) -> ResourceRequest:
        return ResourceRequest(
            self.cpu_cores + other.cpu_cores, self.gpus + other.gpus, self.mem_mb + other.mem_mb
        )

    def minus(self, other: ResourceRequest) -> ResourceRequest:
        return ResourceRequest(
            self.cpu_cores - other.cpu_cores, self.gpus - other.gpus, self.mem_mb - other.mem_mb
        )

    def to_json(self) -> dict[str, int]:
        return {"cpu_cores": self.cpu_cores, "gpus": self.gpus, "mem_mb": self.mem_mb}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> ResourceRequest:
        return cls(
            cpu_cores=int(obj.get("cpu_cores", 0)),
            gpus=int(obj.get("gpus", 0)),
            mem_mb=int(obj.get("mem_mb", 0)),
        )


@dataclass(frozen=True)
class PortSpec:
    """A named, typed connector on a tool: In ports are slots, Out ports constructors."""

    name: str
    direction: Direction
    semantic: SemanticType
    required: bool = True

    def __post_init__(self) -> None:
        if not _IDENT_RE.match(self.name):
            raise ValueError(f"bad port name {self.name!r}")


@dataclass(frozen=True)
class ParamSpec:
    """A literal parameter: scalar semantic type, optional default and range.

    `range` is (low, high) for numeric params or a tuple of allowed strings
    for Text params.
    """

    name: str
    semantic: SemanticType
    default: Any = None
    range: tuple[Any, ...] | None = None

    def __post_init__(self) -> None:
        if not _IDENT_RE.match(self.name):
            raise ValueError(f"bad param name {self.name!r}")
        if self.semantic not in (
            SemanticType.INT,
            SemanticType.FLOAT,
            SemanticType.BOOL,
            SemanticType.TEXT,
        ):
            raise ValueError(f"param {self.name!r} must have scalar semantic type")
        if self.default is not None:
            problem = self.check(self.default)
            if problem:
                raise ValueError(f"param {self.name!r} default invalid: {problem}")

    def check(self, raw: Any) -> str | None:
        """Return a diagnostic message when `raw` violates type or range, else None."""
        if self.semantic is SemanticType.INT:
            if isinstance(raw, bool) or not isinstance(raw, int):
                return f"expected Int, got {type(raw).__name__}"
        elif self.semantic is SemanticType.FLOAT:
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                return f"expected Float, got {type(raw).__name__}"
        elif self.semantic is SemanticType.BOOL:
            if not isinstance(raw, bool):
                return f"expected Bool, got {type(raw).__name__}"
        elif self.semantic is SemanticType.TEXT:
            if not isinstance(raw, str):
                return f"expected Text, got {type(raw).__name__}"
        if self.range is not None:
            if self.semantic is SemanticType.TEXT:
                if raw not in self.range:
                    return f"value {raw!r} not in {list(self.range)}"
            elif self.semantic in (SemanticType.INT, SemanticType.FLOAT):
                lo, hi = self.range
                if not (lo <= raw <= hi):
                    return f"value {raw} outside [{lo}, {hi}]"
        return None


@dataclass(frozen=True)
class ToolSpec:
    """Registered contract of one tool: identity, params, ports, resource hint."""

    tool_id: str
    version: str
    category: ToolCategory
    params: tuple[ParamSpec, ...] = ()
    inputs: tuple[PortSpec, ...] = ()
    outputs: tuple[PortSpec, ...] = ()
    resource_hint: ResourceRequest = ResourceRequest(cpu_cores=1)
    executable: str | None = None  # set for external subprocess tools

    def __post_init__(self) -> None:
        if not _TOOL_ID_RE.match(self.tool_id):
            raise ValueError(f"bad tool id {self.tool_id!r} (want reverse-dot identifier)")
        if not _VERSION_RE.match(self.version):
            raise ValueError(f"bad version {self.version!r} (want semver)")
        for ports, direction in ((self.inputs, Direction.IN), (self.outputs, Direction.OUT)):
            names = [p.name for p in ports]
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate {direction.value} port names on {self.tool_id}")
            for p in ports:
                if p.direction is not direction:
                    raise ValueError(f"port {p.name} listed under wrong direction")
        pnames = [p.name for p in self.params]
        if len(set(pnames)) != len(pnames):
            raise ValueError(f"duplicate param names on {self.tool_id}")

    @property
    def ref(self) -> str:
        return f"{self.tool_id}@{self.version}"

    def input(self, name: str) -> PortSpec | None:
        return next((p for p in self.inputs if p.name == name), None)

    def output(self, name: str) -> PortSpec | None:
        return next((p for p in self.outputs if p.name == name), None)

    def param(self, name: str) -> ParamSpec | None:
        return next((p for p in self.params if p.name == name), None)

    def to_json(self) -> dict[str, Any]:
        return {
            "tool_id": self.tool_id,
            "version": self.version,
            "category": self.category.value,
            "params": [
                {
                    "name": p.name,
                    "semantic": p.semantic.value,
                    "default": p.default,
                    "range": list(p.range) if p.range is not None else None,
                }
                for p in self.params
            ],
            "inputs": [
                {"name": p.name, "semantic": p.semantic.value, "required": p.required}
                for p in self.inputs
            ],
            "outputs": [
                {"name": p.name, "semantic": p.semantic.value, "required": p.required}
                for p in self.outputs
            ],
            "resource_hint": self.resource_hint.to_json(),
            "external": self.executable is not None,
        }


def parse_tool_ref(ref: str) -> tuple[str, str]:
    """Split "tool.id@1.2.3" into (tool_id, version)."""
    if "@" not in ref:
        raise ValueError(f"tool reference {ref!r} missing @version")
    tool_id, version = ref.rsplit("@", 1)
    return tool_id, version


@dataclass(frozen=True)
class Node:
    node_id: str
    tool_ref: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not _IDENT_RE.match(self.node_id):
            raise ValueError(f"bad node id {self.node_id!r}")


@dataclass(frozen=True)
class Edge:
    """Directed wire "node.out_port" -> "node.in_port"."""

    src: str
    dst: str

    @staticmethod
    def endpoint(text: str) -> tuple[str, str]:
        if text.count(".") < 1:
            raise ValueError(f"bad endpoint {text!r} (want node.port)")
        node, port = text.rsplit(".", 1)
        return node, port

    @property
    def src_node(self) -> str:
        return self.endpoint(self.src)[0]

    @property
    def src_port(self) -> str:
        return self.endpoint(self.src)[1]

    @property
    def dst_node(self) -> str:
        return self.endpoint(self.dst)[0]

    @property
    def dst_port(self) -> str:
        return self.endpoint(self.dst)[1]


@dataclass
class PipelineGraph:
    name: str
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def node(self, node_id: str) -> Node | None:
        return next((n for n in self.nodes if n.node_id == node_id), None)

    def to_json(self) -> dict[str, Any]:
        return {
            "version": PIPELINE_FORMAT_VERSION,
            "name": self.name,
            "nodes": [
                {"id": n.node_id, "tool": n.tool_ref, "params": dict(sorted(n.params.items()))}
                for n in sorted(self.nodes, key=lambda n: n.node_id)
            ],
            "edges": [
                {"from": e.src, "to": e.dst}
                for e in sorted(self.edges, key=lambda e: (e.src, e.dst))
            ],
            "metadata": self.metadata,
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_json())

    def content_hash(self) -> str:
        """Hash over the full canonical body, UI metadata included."""
        return sha256_hex(self.canonical_bytes())

    def logical_hash(self) -> str:
        """Hash with metadata["ui"] stripped: identity for runs and the editor."""
        body = self.to_json()
        meta = dict(body["metadata"])
        meta.pop("ui", None)
        body["metadata"] = meta
        return sha256_hex(canonical_json_bytes(body))

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> PipelineGraph:
        if obj.get("version") != PIPELINE_FORMAT_VERSION:
            raise ValueError(f"unsupported pipeline format version {obj.get('version')!r}")
        return cls(
            name=obj["name"],
            nodes=[
                Node(node_id=n["id"], tool_ref=n["tool"], params=dict(n.get("params", {})))
                for n in obj["nodes"]
            ],
            edges=[Edge(src=e["from"], dst=e["to"]) for e in obj["edges"]],
            metadata=dict(obj.get("metadata", {})),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> PipelineGraph:
        return cls.from_json(json.loads(data.decode("utf-8")))


# Validation ---------------------------------------------------------------


class DiagnosticCode(str, Enum):
    UNKNOWN_TOOL = "UnknownTool"
    CYCLE_DETECTED = "CycleDetected"
    TYPE_MISMATCH = "TypeMismatch"
    UNBOUND_REQUIRED_PORT = "UnboundRequiredPort"
    DUPLICATE_EDGE = "DuplicateEdge"
    DUPLICATE_NODE = "DuplicateNode"
    UNKNOWN_NODE = "UnknownNode"
    UNKNOWN_PORT = "UnknownPort"
    BAD_PARAM = "BadParam"


@dataclass(frozen=True)
class Diagnostic:
    code: DiagnosticCode
    message: str
    node_id: str | None = None
    edge: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "code": self.code.value,
            "message": self.message,
            "node_id": self.node_id,
            "edge": self.edge,
        }


@dataclass(frozen=True)
class ValidationReport:
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def to_json(self) -> dict[str, Any]:
        return {"ok": self.ok, "diagnostics": [d.to_json() for d in self.diagnostics]}


class CycleDetected(ValueError):
    pass


def validate_graph(graph: PipelineGraph, registry: "ToolRegistryLike") -> ValidationReport:
    """Pure structural/type check of a pipeline against a tool registry.

    An empty report is equivalent to: node ids unique, every edge endpoint
    resolves, the graph is acyclic, each In port has at most one incoming
    edge, all required In ports are bound by an edge or a literal param, and
    every edge is type-compatible under the coercion lattice.
    """
    diags: list[Diagnostic] = []
    seen_ids: set[str] = set()
    specs: dict[str, ToolSpec] = {}

    for node in graph.nodes:
        if node.node_id in seen_ids:
            diags.append(
                Diagnostic(
                    DiagnosticCode.DUPLICATE_NODE,
                    f"node id {node.node_id!r} appears more than once",
                    node_id=node.node_id,
                )
            )
            continue
        seen_ids.add(node.node_id)
        spec = registry.find(node.tool_ref)
        if spec is None:
            diags.append(
                Diagnostic(
                    DiagnosticCode.UNKNOWN_TOOL,
                    f"tool {node.tool_ref!r} is not registered",
                    node_id=node.node_id,
                )
            )
            continue
        specs[node.node_id] = spec
        for pname, raw in node.params.items():
            pspec = spec.param(pname)
            if pspec is None:
                diags.append(
                    Diagnostic(
                        DiagnosticCode.BAD_PARAM,
                        f"tool {spec.ref} has no param {pname!r}",
                        node_id=node.node_id,
                    )
                )
                continue
            problem = pspec.check(raw)
            if problem:
                diags.append(
                    Diagnostic(
                        DiagnosticCode.BAD_PARAM,
                        f"param {pname!r}: {problem}",
                        node_id=node.node_id,
                    )
                )

    bound_in: dict[tuple[str, str], int] = {}
    for edge in graph.edges:
        label = f"{edge.src}->{edge.dst}"
        try:
            src_node, src_port = Edge.endpoint(edge.src)
            dst_node, dst_port = Edge.endpoint(edge.dst)
        except ValueError as exc:
            diags.append(Diagnostic(DiagnosticCode.UNKNOWN_PORT, str(exc), edge=label))
            continue
        ok = True
        for nid in (src_node, dst_node):
            if nid not in seen_ids:
                diags.append(
                    Diagnostic(
                        DiagnosticCode.UNKNOWN_NODE,
                        f"edge references unknown node {nid!r}",
                        edge=label,
                    )
                )
                ok = False
        if not ok:
            continue
        src_spec = specs.get(src_node)
        dst_spec = specs.get(dst_node)
        if src_spec is None or dst_spec is None:
            continue  # already diagnosed UnknownTool
        out_port = src_spec.output(src_port)
        in_port = dst_spec.input(dst_port)
        if out_port is None:
            diags.append(
                Diagnostic(
                    DiagnosticCode.UNKNOWN_PORT,
                    f"{src_spec.ref} has no output port {src_port!r}",
                    edge=label,
                )
            )
        if in_port is None:
            diags.append(
                Diagnostic(
                    DiagnosticCode.UNKNOWN_PORT,
                    f"{dst_spec.ref} has no input port {dst_port!r}",
                    edge=label,
                )
            )
        if out_port is None or in_port is None:
            continue
        key = (dst_node, dst_port)
        bound_in[key] = bound_in.get(key, 0) + 1
        if bound_in[key] == 2:  # report once per over-bound port
            diags.append(
                Diagnostic(
                    DiagnosticCode.DUPLICATE_EDGE,
                    f"input port {dst_node}.{dst_port} has more than one incoming edge",
                    edge=label,
                )
            )
        if not compatible(out_port.semantic, in_port.semantic):
            diags.append(
                Diagnostic(
                    DiagnosticCode.TYPE_MISMATCH,
                    f"{out_port.semantic.value} output cannot feed "
                    f"{in_port.semantic.value} input",
                    edge=label,
                )
            )

    for node in graph.nodes:
        spec = specs.get(node.node_id)
        if spec is None:
            continue
        for port in spec.inputs:
            if not port.required:
                continue
            if (node.node_id, port.name) in bound_in:
                continue
            # Literal param fallback: a same-named scalar param or default binds
            # an unwired slot; an edge overrides a literal.
            pspec = spec.param(port.name)
            if port.name in node.params or (pspec is not None and pspec.default is not None):
                continue
            diags.append(
                Diagnostic(
                    DiagnosticCode.UNBOUND_REQUIRED_PORT,
                    f"required input {node.node_id}.{port.name} is not bound",
                    node_id=node.node_id,
                )
            )

    try:
        order = topo_order(graph)
        del order
    except CycleDetected as exc:
        diags.append(Diagnostic(DiagnosticCode.CYCLE_DETECTED, str(exc)))

    return ValidationReport(diagnostics=tuple(diags))


def topo_order(graph: PipelineGraph) -> list[str]:
    """Deterministic topological order, ties broken lexicographically by node id."""
    ids = sorted({n.node_id for n in graph.nodes})
    indeg = {nid: 0 for nid in ids}
    out: dict[str, set[str]] = {nid: set() for nid in ids}
    for edge in graph.edges:
        try:
            src, dst = edge.src_node, edge.dst_node
        except ValueError:
            continue
        if src not in indeg or dst not in indeg:
            continue
        if dst not in out[src]:
            out[src].add(dst)
            indeg[dst] += 1
    heap = [nid for nid in ids if indeg[nid] == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        nid = heapq.heappop(heap)
        order.append(nid)
        for succ in sorted(out[nid]):
            indeg[succ] -= 1
            if indeg[succ] == 0:
                heapq.heappush(heap, succ)
    if len(order) != len(ids):
        stuck = sorted(nid for nid in ids if indeg[nid] > 0)
        raise CycleDetected(f"cycle through nodes {stuck}")
    return order


def upstream_nodes(graph: PipelineGraph, node_id: str) -> list[Edge]:
    return [e for e in graph.edges if e.dst_node == node_id]


def downstream_closure(graph: PipelineGraph, node_id: str) -> set[str]:
    """All nodes transitively reachable from `node_id` (exclusive)."""
    succs: dict[str, set[str]] = {}
    for e in graph.edges:
        succs.setdefault(e.src_node, set()).add(e.dst_node)
    seen: set[str] = set()
    frontier = [node_id]
    while frontier:
        nid = frontier.pop()
        for succ in succs.get(nid, ()):
            if succ not in seen:
                seen.add(succ)
                frontier.append(succ)
    return seen


class ToolRegistryLike:
    """Anything that resolves a "tool@version" reference to a ToolSpec."""

    def find(self, ref: str) -> ToolSpec | None:  # pragma: no cover - protocol
        raise NotImplementedError
