"""Pipeline executor: dependency-ordered scheduling, caching, skip semantics.

One coordinator thread owns every state transition and persists the run
record atomically after each one; worker threads only evaluate tools and
report back. Tool results are cached by a content key over
(tool@version, params, input values, seed) so re-running an unchanged
pipeline executes nothing.
"""

from __future__ import annotations

import hashlib
import io
import os
import tempfile
import threading
import time
import uuid
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from ..graph import PipelineGraph, downstream_closure, topo_order, validate_graph
from ..registry import ToolContext, ToolRegistry
from ..store import ArtifactStore, check_artifact_semantics
from ..values import (
    ArtifactVal,
    DatasetVal,
    Media,
    TableVal,
    Value,
    canonical_json_bytes,
    coerce,
    python_to_value,
    value_from_json,
    value_to_json,
)
from .either import Failure, Success, either_chain
from .logs import FileSink, LogSink, RunLogger


class ExecutionState(str, Enum):
    BLOCKED = "Blocked"
    READY = "Ready"
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"
    SKIPPED_UPSTREAM_FAILURE = "SkippedUpstreamFailure"
    CACHE_HIT = "CacheHit"


TERMINAL_STATES = {
    ExecutionState.SUCCEEDED,
    ExecutionState.FAILED,
    ExecutionState.SKIPPED_UPSTREAM_FAILURE,
    ExecutionState.CACHE_HIT,
}
SUCCESSFUL_STATES = {ExecutionState.SUCCEEDED, ExecutionState.CACHE_HIT}

_LEGAL_TRANSITIONS = {
    ExecutionState.BLOCKED: {ExecutionState.READY, ExecutionState.SKIPPED_UPSTREAM_FAILURE},
    ExecutionState.READY: {ExecutionState.RUNNING, ExecutionState.CACHE_HIT},
    ExecutionState.RUNNING: {ExecutionState.SUCCEEDED, ExecutionState.FAILED},
}


class InvalidPipeline(ValueError):
    pass


class IllegalTransition(RuntimeError):
    pass


class CacheUnsound(RuntimeError):
    """A verified cache hit disagreed with re-execution; storage-level fault."""


class EngineFault(RuntimeError):
    """Infrastructure error (store unavailable, record unwritable)."""


@dataclass
class NodeRecord:
    state: ExecutionState = ExecutionState.BLOCKED
    cache_key: str | None = None
    started: float | None = None
    ended: float | None = None
    outputs: dict[str, Value] = field(default_factory=dict)
    tables_csv: dict[str, Any] = field(default_factory=dict)
    error: str | None = None
    failed_step: str | None = None

    def transition(self, new: ExecutionState) -> None:
        if self.state in TERMINAL_STATES:
            raise IllegalTransition(f"terminal state {self.state.value} is immutable")
        allowed = _LEGAL_TRANSITIONS.get(self.state, set())
        if new not in allowed:
            raise IllegalTransition(f"{self.state.value} -> {new.value} not allowed")
        self.state = new

    def to_json(self) -> dict[str, Any]:
        return {
            "state": self.state.value,
            "cache_key": self.cache_key,
            "started": self.started,
            "ended": self.ended,
            "outputs": {p: value_to_json(v) for p, v in sorted(self.outputs.items())},
            "tables_csv": self.tables_csv,
            "error": self.error,
            "failed_step": self.failed_step,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> NodeRecord:
        rec = cls(
            state=ExecutionState(obj["state"]),
            cache_key=obj.get("cache_key"),
            started=obj.get("started"),
            ended=obj.get("ended"),
            outputs={p: value_from_json(v) for p, v in obj.get("outputs", {}).items()},
            tables_csv=dict(obj.get("tables_csv", {})),
            error=obj.get("error"),
            failed_step=obj.get("failed_step"),
        )
        return rec


@dataclass
class RunRecord:
    run_id: str
    pipeline_hash: str
    seed: int
    cache_enabled: bool
    status: str = "running"  # running | succeeded | failed | killed
    nodes: dict[str, NodeRecord] = field(default_factory=dict)
    started: float | None = None
    ended: float | None = None
    executed_nodes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.state in SUCCESSFUL_STATES for r in self.nodes.values())

    def to_json(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "pipeline_hash": self.pipeline_hash,
            "seed": self.seed,
            "cache_enabled": self.cache_enabled,
            "status": self.status,
            "started": self.started,
            "ended": self.ended,
            "executed_nodes": self.executed_nodes,
            "nodes": {nid: rec.to_json() for nid, rec in sorted(self.nodes.items())},
            "log": "logs.ndjson",
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> RunRecord:
        return cls(
            run_id=obj["run_id"],
            pipeline_hash=obj["pipeline_hash"],
            seed=obj["seed"],
            cache_enabled=obj["cache_enabled"],
            status=obj["status"],
            nodes={nid: NodeRecord.from_json(r) for nid, r in obj.get("nodes", {}).items()},
            started=obj.get("started"),
            ended=obj.get("ended"),
            executed_nodes=list(obj.get("executed_nodes", [])),
        )


@dataclass
class ExecuteOptions:
    max_workers: int | None = None  # default: cores - 1
    cache: bool = True
    seed: int = 0
    run_id: str | None = None
    check_binds: bool = True
    verify_cache_fraction: float = 0.0
    extra_sinks: tuple[LogSink, ...] = ()
    cancel: threading.Event | None = None


def node_seed(run_seed: int, node_id: str) -> int:
    digest = hashlib.sha256(f"{run_seed}:{node_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _value_cache_key(value: Value) -> Any:
    """Content identity of a value: artifacts by hash, the rest by payload."""
    if isinstance(value, ArtifactVal):
        return {"artifact": value.ref.hash, "kind": value.kind.value}
    return value_to_json(value)


def cache_key(tool_ref: str, params: Mapping[str, Any], inputs: Mapping[str, Value], seed: int) -> str:
    body = {
        "tool": tool_ref,
        "params": dict(sorted(params.items())),
        "inputs": {port: _value_cache_key(v) for port, v in sorted(inputs.items())},
        "seed": seed,
    }
    return hashlib.sha256(canonical_json_bytes(body)).hexdigest()


def collect_metrics(record: "RunRecord") -> dict[str, float]:
    """Gather {metric: value} rows from every metric table in a run record."""
    out: dict[str, float] = {}
    for nrec in record.nodes.values():
        for value in nrec.outputs.values():
            if isinstance(value, TableVal):
                for row in value.rows:
                    if "metric" in row and "value" in row:
                        out[str(row["metric"])] = float(row["value"])
    return out


def table_to_csv_bytes(table: TableVal) -> bytes:
    """Render a table as CSV with a sorted header (loss curves: epoch,loss)."""
    import csv

    cols: list[str] = sorted({k for row in table.rows for k in row})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in table.rows:
        writer.writerow({k: row.get(k, "") for k in cols})
    return buf.getvalue().encode("utf-8")


class Engine:
    def __init__(
        self,
        store: ArtifactStore,
        registry: ToolRegistry,
        runs_dir: str | Path,
        cache_dir: str | Path,
    ) -> None:
        self.store = store
        self.registry = registry
        self.runs_dir = Path(runs_dir)
        self.cache_dir = Path(cache_dir)
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    # Cache ----------------------------------------------------------------

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def cache_load(self, key: str) -> dict[str, Value] | None:
        path = self._cache_path(key)
        if not path.exists():
            return None
        import json

        obj = json.loads(path.read_text(encoding="utf-8"))
        return {p: value_from_json(v) for p, v in obj["outputs"].items()}

    def cache_store(self, key: str, outputs: Mapping[str, Value]) -> None:
        path = self._cache_path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        body = canonical_json_bytes(
            {"outputs": {p: value_to_json(v) for p, v in sorted(outputs.items())}}
        )
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".cache-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(body)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    # Record persistence ----------------------------------------------------

    def _persist(self, record: RunRecord) -> None:
        run_dir = self.runs_dir / record.run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        body = canonical_json_bytes(record.to_json())
        fd, tmp = tempfile.mkstemp(dir=run_dir, prefix=".record-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(body)
            os.replace(tmp, run_dir / "record.json")
        except OSError as exc:
            raise EngineFault(f"cannot persist run record: {exc}") from exc
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def load_record(self, run_id: str) -> RunRecord:
        import json

        path = self.runs_dir / run_id / "record.json"
        return RunRecord.from_json(json.loads(path.read_text(encoding="utf-8")))

    # Node evaluation (worker side) ------------------------------------------

    def _resolve_inputs(
        self,
        graph: PipelineGraph,
        node_id: str,
        outputs_env: Mapping[str, Mapping[str, Value]],
        check_binds: bool,
    ) -> dict[str, Value]:
        node = graph.node(node_id)
        spec = self.registry.get(node.tool_ref).spec
        wired: dict[str, Value] = {}
        for edge in graph.edges:
            if edge.dst_node != node_id:
                continue
            port = spec.input(edge.dst_port)
            value = outputs_env[edge.src_node][edge.src_port]
            wired[edge.dst_port] = coerce(value, port.semantic)
        for port in spec.inputs:
            if port.name in wired:
                continue
            if port.name in node.params:
                wired[port.name] = coerce(python_to_value(node.params[port.name]), port.semantic)
            elif not port.required:
                continue
        if check_binds:
            for name, value in wired.items():
                if isinstance(value, ArtifactVal):
                    check_artifact_semantics(self.store, value)
        return wired

    def _effective_params(self, graph: PipelineGraph, node_id: str) -> dict[str, Any]:
        node = graph.node(node_id)
        spec = self.registry.get(node.tool_ref).spec
        params: dict[str, Any] = {
            p.name: p.default for p in spec.params if p.default is not None
        }
        params.update(node.params)
        return params

    def _evaluate_node(
        self,
        graph: PipelineGraph,
        node_id: str,
        outputs_env: Mapping[str, Mapping[str, Value]],
        opts: ExecuteOptions,
        logger: RunLogger,
        workdir: Path,
    ) -> tuple[str, "Success | Failure", str, bool]:
        """Returns (node_id, chain result, cache_key, was_cache_hit)."""
        node = graph.node(node_id)
        tool = self.registry.get(node.tool_ref)
        seed = node_seed(opts.seed, node_id)
        params = self._effective_params(graph, node_id)

        state: dict[str, Any] = {}

        def step_resolve(_: Any) -> Any:
            state["inputs"] = self._resolve_inputs(graph, node_id, outputs_env, opts.check_binds)
            state["key"] = cache_key(node.tool_ref, params, state["inputs"], seed)
            return state

        def step_cache(st: dict) -> dict:
            st["cached"] = self.cache_load(st["key"]) if opts.cache else None
            return st

        def step_run(st: dict) -> dict:
            cached = st.get("cached")
            must_verify = False
            if cached is not None and opts.verify_cache_fraction > 0:
                draw = int(st["key"][:8], 16) / 0xFFFFFFFF
                must_verify = draw < opts.verify_cache_fraction
            if cached is not None and not must_verify:
                st["outputs"] = cached
                st["hit"] = True
                return st
            ctx = ToolContext(
                store=self.store,
                workdir=workdir / node_id,
                inputs=st["inputs"],
                params=params,
                seed=seed,
                log=lambda level, message: logger.emit(level, message, node_id=node_id),
            )
            outputs = dict(tool.run(ctx))
            if cached is not None and must_verify:
                if {p: _value_cache_key(v) for p, v in cached.items()} != {
                    p: _value_cache_key(v) for p, v in outputs.items()
                }:
                    raise CacheUnsound(f"cache entry {st['key']} diverges from re-execution")
                st["outputs"] = cached
                st["hit"] = True
                return st
            st["outputs"] = outputs
            st["hit"] = False
            return st

        def step_construct(st: dict) -> dict:
            for port in tool.spec.outputs:
                if port.required and port.name not in st["outputs"]:
                    raise RuntimeError(f"tool produced no output for port {port.name!r}")
            if not st["hit"] and opts.cache:
                self.cache_store(st["key"], st["outputs"])
            return st

        result = either_chain(
            None,
            [
                ("resolve", step_resolve),
                ("cache", step_cache),
                ("run", step_run),
                ("construct", step_construct),
            ],
        )
        key = state.get("key", "")
        hit = bool(state.get("hit")) if isinstance(result, Success) else False
        return node_id, result, key, hit

    # Coordinator --------------------------------------------------------------

    def execute(self, graph: PipelineGraph, opts: ExecuteOptions | None = None) -> RunRecord:
        opts = opts or ExecuteOptions()
        report = validate_graph(graph, self.registry)
        if not report.ok:
            raise InvalidPipeline(
                "; ".join(f"{d.code.value}: {d.message}" for d in report.diagnostics)
            )
        run_id = opts.run_id or uuid.uuid4().hex[:12]
        run_dir = self.runs_dir / run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        workdir = run_dir / "work"
        logger = RunLogger(run_id, [FileSink(run_dir / "logs.ndjson"), *opts.extra_sinks])

        order = topo_order(graph)
        record = RunRecord(
            run_id=run_id,
            pipeline_hash=graph.logical_hash(),
            seed=opts.seed,
            cache_enabled=opts.cache,
            nodes={nid: NodeRecord() for nid in order},
            started=time.time(),
        )
        self._persist(record)
        logger.emit("info", "run started", fields={"pipeline_hash": record.pipeline_hash})

        deps: dict[str, set[str]] = {nid: set() for nid in order}
        for edge in graph.edges:
            deps[edge.dst_node].add(edge.src_node)

        outputs_env: dict[str, dict[str, Value]] = {}
        max_workers = opts.max_workers or max(1, (os.cpu_count() or 2) - 1)
        pending: dict[Future, str] = {}

        def ready_nodes() -> list[str]:
            out = []
            for nid in order:
                rec = record.nodes[nid]
                if rec.state is not ExecutionState.BLOCKED:
                    continue
                if nid in (pending_ids := set(pending.values())):
                    continue
                if all(record.nodes[d].state in SUCCESSFUL_STATES for d in deps[nid]):
                    out.append(nid)
            return out

        def mark_failed(nid: str, error: Exception, failed_step: str) -> None:
            rec = record.nodes[nid]
            logger.emit(
                "error",
                f"node failed at step {failed_step}: {error}",
                node_id=nid,
                fields={"step": failed_step, "error_type": type(error).__name__},
            )
            rec.transition(ExecutionState.FAILED)
            rec.error = f"{type(error).__name__}: {error}"
            rec.failed_step = failed_step
            rec.ended = time.time()
            self._persist(record)
            for down in sorted(downstream_closure(graph, nid)):
                drec = record.nodes[down]
                if drec.state is ExecutionState.BLOCKED:
                    drec.transition(ExecutionState.SKIPPED_UPSTREAM_FAILURE)
                    logger.emit("warn", "skipped: upstream failure", node_id=down)
            self._persist(record)

        cancelled = False
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            while True:
                if opts.cancel is not None and opts.cancel.is_set():
                    cancelled = True
                for nid in [] if cancelled else ready_nodes():
                    rec = record.nodes[nid]
                    rec.transition(ExecutionState.READY)
                    rec.started = time.time()
                    self._persist(record)
                    fut = pool.submit(
                        self._evaluate_node, graph, nid, dict(outputs_env), opts, logger, workdir
                    )
                    pending[fut] = nid
                if not pending:
                    break
                done, _ = wait(list(pending), return_when=FIRST_COMPLETED)
                for fut in done:
                    nid = pending.pop(fut)
                    rec = record.nodes[nid]
                    try:
                        _, result, key, hit = fut.result()
                    except Exception as exc:  # worker infrastructure fault
                        rec.transition(ExecutionState.RUNNING)
                        mark_failed(nid, exc, "infrastructure")
                        continue
                    rec.cache_key = key or None
                    if isinstance(result, Failure):
                        if isinstance(result.error, (CacheUnsound, EngineFault)):
                            raise result.error
                        rec.transition(ExecutionState.RUNNING)
                        mark_failed(nid, result.error, result.failed_step)
                        continue
                    st = result.value
                    outputs = st["outputs"]
                    outputs_env[nid] = outputs
                    for port, value in outputs.items():
                        if isinstance(value, TableVal):
                            csv_ref = self.store.put(table_to_csv_bytes(value), Media.CSV)
                            rec.tables_csv[port] = csv_ref.to_json()
                    if hit:
                        rec.transition(ExecutionState.CACHE_HIT)
                        logger.emit("info", "cache hit", node_id=nid, fields={"cache_key": key})
                    else:
                        rec.transition(ExecutionState.RUNNING)
                        record.executed_nodes.append(nid)
                        logger.emit("info", "node executed", node_id=nid, fields={"cache_key": key})
                        rec.transition(ExecutionState.SUCCEEDED)
                    rec.outputs = dict(outputs)
                    rec.ended = time.time()
                    self._persist(record)

        if cancelled:
            record.status = "killed"
        else:
            record.status = "succeeded" if record.ok else "failed"
        record.ended = time.time()
        logger.emit("info", f"run {record.status}")
        logger.flush()
        self._persist(record)
        return record
