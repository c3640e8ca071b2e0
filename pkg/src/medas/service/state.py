"""Service persistence and orchestration: accounts, pipelines, tasks, studies.

Everything lives under one data directory:

    store/    content-addressed artifacts
    cache/    engine result cache
    runs/     per-run records and ndjson logs
    meta/     pipelines/, tasks/, studies/, idempotency/ as atomic JSON files

Metadata writes are single-file atomic renames. On startup, recover() marks
tasks that were Running at crash time as Failed(Interrupted) and re-admits
the queue, so a restarted service picks up where the old one stopped without
losing artifacts (re-submission replays from the engine cache).
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from ..engine import CallbackSink, Engine, ExecuteOptions, LogEvent
from ..graph import PipelineGraph, ResourceRequest, ToolCategory, validate_graph
from ..hpo import Acquisition, SearchSpace, Study
from ..registry import ToolRegistry
from ..scheduler import Inventory, Scheduler, Task, TaskState
from ..store import ArtifactStore, sha256_hex
from ..tools import build_default_registry
from ..values import TableVal, canonical_json_bytes


class ServiceError(Exception):
    pass


class CorruptMetadata(ServiceError):
    """Undecodable metadata on disk; the service refuses to start."""


class UnknownId(ServiceError):
    pass


@dataclass(frozen=True)
class Account:
    account_id: str
    token_sha256: str
    quota: ResourceRequest


def load_accounts(tokens_file: Path) -> dict[str, Account]:
    """Tokens file: JSON list of {account, token | token_sha256, quota}."""
    entries = json.loads(tokens_file.read_text(encoding="utf-8"))
    out: dict[str, Account] = {}
    for e in entries:
        digest = e.get("token_sha256") or hashlib.sha256(e["token"].encode("utf-8")).hexdigest()
        acct = Account(
            account_id=e["account"],
            token_sha256=digest,
            quota=ResourceRequest.from_json(e.get("quota", {})),
        )
        out[acct.account_id] = acct
    return out


def bootstrap_tokens_file(path: Path, inventory: Inventory) -> str:
    """Create a single-account tokens file; returns the plaintext token."""
    token = secrets.token_hex(16)
    body = [
        {
            "account": "local",
            "token_sha256": hashlib.sha256(token.encode("utf-8")).hexdigest(),
            "quota": inventory.total.to_json(),
        }
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(body, indent=2), encoding="utf-8")
    return token


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".meta-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptMetadata(f"{path}: {exc}") from exc


@dataclass
class StoredPipeline:
    pipeline_id: str
    body: bytes  # canonical JSON
    content_hash: str
    logical_hash: str
    owner: str
    created_at: float

    def to_meta(self) -> dict[str, Any]:
        return {
            "pipeline_id": self.pipeline_id,
            "body": self.body.decode("utf-8"),
            "content_hash": self.content_hash,
            "logical_hash": self.logical_hash,
            "owner": self.owner,
            "created_at": self.created_at,
        }

    @classmethod
    def from_meta(cls, obj: Mapping[str, Any]) -> StoredPipeline:
        return cls(
            pipeline_id=obj["pipeline_id"],
            body=obj["body"].encode("utf-8"),
            content_hash=obj["content_hash"],
            logical_hash=obj["logical_hash"],
            owner=obj["owner"],
            created_at=obj["created_at"],
        )


@dataclass
class StudyRecord:
    study_id: str
    owner: str
    config: dict[str, Any]
    status: str = "running"  # running | finished | failed
    created_at: float = 0.0
    study_json: dict[str, Any] | None = None


class ServiceState:
    """Single-process state machine backing the HTTP facade and the CLI."""

    def __init__(
        self,
        data_dir: str | Path,
        inventory: Inventory | None = None,
        accounts: Mapping[str, Account] | None = None,
        registry: ToolRegistry | None = None,
    ) -> None:
        self.data_dir = Path(data_dir)
        self.meta_dir = self.data_dir / "meta"
        for sub in ("pipelines", "tasks", "studies", "idempotency"):
            (self.meta_dir / sub).mkdir(parents=True, exist_ok=True)
        self.inventory = inventory or Inventory.of(cpu_cores=4, gpus=2, mem_mb=8192)
        self.accounts = dict(accounts or {})
        self.registry = registry or build_default_registry()
        self.store = ArtifactStore(self.data_dir / "store")
        self.engine = Engine(
            self.store, self.registry, self.data_dir / "runs", self.data_dir / "cache"
        )
        self.scheduler = Scheduler(
            self.inventory,
            {a.account_id: a.quota for a in self.accounts.values()},
            event_log_path=self.data_dir / "scheduler-events.ndjson",
        )
        self._lock = threading.RLock()
        self._tasks_meta: dict[str, dict[str, Any]] = {}
        self._studies: dict[str, StudyRecord] = {}
        self._cancel_events: dict[str, threading.Event] = {}
        self._done_events: dict[str, threading.Event] = {}
        self._log_subscribers: dict[str, list[Callable[[LogEvent], None]]] = {}
        self.recover()

    # Auth -------------------------------------------------------------------

    def authenticate(self, token: str | None) -> Account | None:
        if not token:
            return None
        digest = hashlib.sha256(token.encode("utf-8")).hexdigest()
        for acct in self.accounts.values():
            if acct.token_sha256 == digest:
                return acct
        return None

    # Recovery ------------------------------------------------------------------

    def recover(self) -> None:
        """Reload metadata; interrupted Running tasks fail, queue re-admits."""
        with self._lock:
            metas = []
            for path in sorted((self.meta_dir / "tasks").glob("*.json")):
                metas.append(_read_json(path))
            for path in sorted((self.meta_dir / "studies").glob("*.json")):
                obj = _read_json(path)
                self._studies[obj["study_id"]] = StudyRecord(
                    study_id=obj["study_id"],
                    owner=obj["owner"],
                    config=obj["config"],
                    status="failed" if obj["status"] == "running" else obj["status"],
                    created_at=obj["created_at"],
                    study_json=obj.get("study_json"),
                )
                if obj["status"] == "running":
                    self._persist_study(self._studies[obj["study_id"]])
            metas.sort(key=lambda m: (m["task"]["submitted_at"], m["task"]["seq"]))
            for meta in metas:
                t = meta["task"]
                state = TaskState(t["state"])
                if state is TaskState.RUNNING:
                    t["state"] = TaskState.FAILED.value
                    t["reason"] = "Interrupted"
                    t["ended_at"] = time.time()
                    meta["task"] = t
                self._tasks_meta[t["task_id"]] = meta
                self._persist_task_meta(meta)
            # Rebuild scheduler state: re-admit tasks queued at crash time.
            for meta in metas:
                t = meta["task"]
                if TaskState(t["state"]) is TaskState.QUEUED:
                    task = self.scheduler.submit(
                        t["task_id"],
                        t["account"],
                        t["pipeline_hash"],
                        ResourceRequest.from_json(t["request"]),
                    )
                    self._sync_task(task, meta)
                    if task.state is TaskState.RUNNING:
                        self._spawn_runner(task.task_id)

    # Pipelines --------------------------------------------------------------------

    def put_pipeline(self, body: Mapping[str, Any], owner: str) -> tuple[StoredPipeline, Any]:
        graph = PipelineGraph.from_json(body)
        report = validate_graph(graph, self.registry)
        if not report.ok:
            return None, report  # caller maps to 400
        canonical = graph.canonical_bytes()
        stored = StoredPipeline(
            pipeline_id=uuid.uuid4().hex[:12],
            body=canonical,
            content_hash=sha256_hex(canonical),
            logical_hash=graph.logical_hash(),
            owner=owner,
            created_at=time.time(),
        )
        _atomic_write(
            self.meta_dir / "pipelines" / f"{stored.pipeline_id}.json",
            canonical_json_bytes(stored.to_meta()),
        )
        return stored, report

    def get_pipeline(self, pipeline_id: str) -> StoredPipeline:
        path = self.meta_dir / "pipelines" / f"{pipeline_id}.json"
        if not path.exists():
            raise UnknownId(f"pipeline {pipeline_id}")
        stored = StoredPipeline.from_meta(_read_json(path))
        if sha256_hex(stored.body) != stored.content_hash:
            raise CorruptMetadata(f"pipeline {pipeline_id}: body hash mismatch")
        return stored

    def list_pipelines(self, page: int = 0, limit: int = 50) -> list[dict[str, Any]]:
        entries = []
        for path in (self.meta_dir / "pipelines").glob("*.json"):
            obj = _read_json(path)
            entries.append(
                {
                    "pipeline_id": obj["pipeline_id"],
                    "content_hash": obj["content_hash"],
                    "logical_hash": obj["logical_hash"],
                    "owner": obj["owner"],
                    "created_at": obj["created_at"],
                }
            )
        entries.sort(key=lambda e: (e["created_at"], e["pipeline_id"]))
        return entries[page * limit : (page + 1) * limit]

    # Tasks -----------------------------------------------------------------------

    def _persist_task_meta(self, meta: dict[str, Any]) -> None:
        _atomic_write(
            self.meta_dir / "tasks" / f"{meta['task']['task_id']}.json",
            canonical_json_bytes(meta),
        )

    def _sync_task(self, task: Task, meta: dict[str, Any]) -> None:
        meta["task"] = task.to_json()
        self._tasks_meta[task.task_id] = meta
        self._persist_task_meta(meta)

    def submit_task(
        self,
        account: str,
        pipeline_id: str,
        request: ResourceRequest,
        seed: int = 0,
        idempotency_key: str | None = None,
    ) -> dict[str, Any]:
        with self._lock:
            if idempotency_key:
                idem_path = (
                    self.meta_dir
                    / "idempotency"
                    / f"{hashlib.sha256(idempotency_key.encode()).hexdigest()}.json"
                )
                if idem_path.exists():
                    prior = _read_json(idem_path)
                    return self._tasks_meta[prior["task_id"]]
            stored = self.get_pipeline(pipeline_id)
            task_id = uuid.uuid4().hex[:12]
            task = self.scheduler.submit(task_id, account, stored.logical_hash, request)
            meta = {
                "task": task.to_json(),
                "pipeline_id": pipeline_id,
                "seed": seed,
                "run_id": task_id,
                "idempotency_key": idempotency_key,
            }
            self._tasks_meta[task_id] = meta
            self._persist_task_meta(meta)
            if idempotency_key:
                _atomic_write(idem_path, canonical_json_bytes({"task_id": task_id}))
            if task.state is TaskState.RUNNING:
                self._spawn_runner(task_id)
            return meta

    def get_task(self, task_id: str) -> dict[str, Any]:
        with self._lock:
            if task_id not in self._tasks_meta:
                raise UnknownId(f"task {task_id}")
            meta = dict(self._tasks_meta[task_id])
        run_path = self.data_dir / "runs" / meta["run_id"] / "record.json"
        if run_path.exists():
            record = _read_json(run_path)
            meta["nodes"] = {nid: n["state"] for nid, n in record.get("nodes", {}).items()}
            meta["run_status"] = record.get("status")
        return meta

    def list_tasks(self) -> list[dict[str, Any]]:
        with self._lock:
            metas = list(self._tasks_meta.values())
        metas.sort(key=lambda m: (m["task"]["submitted_at"], m["task"]["seq"]))
        return metas

    def kill_task(self, task_id: str) -> dict[str, Any]:
        with self._lock:
            if task_id not in self._tasks_meta:
                raise UnknownId(f"task {task_id}")
            task, started = self.scheduler.kill(task_id)
            if task_id in self._cancel_events:
                self._cancel_events[task_id].set()
            self._sync_task(task, self._tasks_meta[task_id])
            for t in started:
                self._sync_task(t, self._tasks_meta[t.task_id])
                self._spawn_runner(t.task_id)
            return self._tasks_meta[task_id]

    def log_path(self, task_id: str) -> Path:
        meta = self.get_task(task_id)
        return self.data_dir / "runs" / meta["run_id"] / "logs.ndjson"

    def task_terminal(self, task_id: str) -> bool:
        state = TaskState(self.get_task(task_id)["task"]["state"])
        return state in (TaskState.SUCCEEDED, TaskState.FAILED, TaskState.KILLED)

    def subscribe_logs(self, task_id: str, fn: Callable[[LogEvent], None]) -> None:
        with self._lock:
            self._log_subscribers.setdefault(task_id, []).append(fn)

    def wait_task(self, task_id: str, timeout: float | None = None) -> bool:
        with self._lock:
            ev = self._done_events.get(task_id)
        if ev is None:
            return self.task_terminal(task_id)
        return ev.wait(timeout=timeout)

    # Execution ---------------------------------------------------------------------

    def _spawn_runner(self, task_id: str) -> None:
        cancel = threading.Event()
        done = threading.Event()
        self._cancel_events[task_id] = cancel
        self._done_events[task_id] = done
        thread = threading.Thread(target=self._run_task, args=(task_id, cancel, done), daemon=True)
        thread.start()

    def _run_task(self, task_id: str, cancel: threading.Event, done: threading.Event) -> None:
        meta = self._tasks_meta[task_id]
        outcome, reason = "failed", None
        try:
            stored = self.get_pipeline(meta["pipeline_id"])
            graph = PipelineGraph.from_bytes(stored.body)
            subscribers = self._log_subscribers.setdefault(task_id, [])

            def fanout(event: LogEvent) -> None:
                for fn in list(subscribers):
                    try:
                        fn(event)
                    except Exception:
                        pass

            record = self.engine.execute(
                graph,
                ExecuteOptions(
                    seed=meta["seed"],
                    run_id=meta["run_id"],
                    cancel=cancel,
                    extra_sinks=(CallbackSink(fanout),),
                ),
            )
            if record.status == "succeeded":
                outcome = "succeeded"
            else:
                reason = record.status
        except Exception as exc:  # noqa: BLE001 - report as task failure
            reason = f"{type(exc).__name__}: {exc}"
        with self._lock:
            task = self.scheduler.task(task_id)
            if task.state is TaskState.RUNNING:
                started = self.scheduler.on_completion(task_id, outcome, reason)
                self._sync_task(self.scheduler.task(task_id), meta)
                for t in started:
                    self._sync_task(t, self._tasks_meta[t.task_id])
                    self._spawn_runner(t.task_id)
            else:
                # Killed while running: scheduler already released resources.
                self._sync_task(task, meta)
        done.set()

    # Metrics / studies -----------------------------------------------------------------

    def run_metrics(self, run_id: str) -> dict[str, float]:
        """Collect {metric name: value} from every metric table in a run record."""
        from ..engine.runner import collect_metrics

        return collect_metrics(self.engine.load_record(run_id))

    def _persist_study(self, rec: StudyRecord) -> None:
        _atomic_write(
            self.meta_dir / "studies" / f"{rec.study_id}.json",
            canonical_json_bytes(
                {
                    "study_id": rec.study_id,
                    "owner": rec.owner,
                    "config": rec.config,
                    "status": rec.status,
                    "created_at": rec.created_at,
                    "study_json": rec.study_json,
                }
            ),
        )

    def create_study(self, owner: str, config: Mapping[str, Any]) -> StudyRecord:
        """Launch a background ask/tell loop; trials run as scheduler tasks."""
        config = dict(config)
        SearchSpace.from_json(config["space"])  # validate early
        self.get_pipeline(config["pipeline_id"])
        rec = StudyRecord(
            study_id=uuid.uuid4().hex[:12],
            owner=owner,
            config=config,
            created_at=time.time(),
        )
        with self._lock:
            self._studies[rec.study_id] = rec
            self._persist_study(rec)
        thread = threading.Thread(target=self._run_study, args=(rec,), daemon=True)
        thread.start()
        return rec

    def get_study(self, study_id: str) -> StudyRecord:
        with self._lock:
            if study_id not in self._studies:
                raise UnknownId(f"study {study_id}")
            return self._studies[study_id]

    def _run_study(self, rec: StudyRecord) -> None:
        try:
            cfg = rec.config
            space = SearchSpace.from_json(cfg["space"])
            acq_cfg = cfg.get("acquisition", {})
            study = Study(
                space,
                seed=int(cfg.get("seed", 0)),
                surrogate=cfg.get("surrogate", "gp"),
                acquisition=Acquisition(
                    kind=acq_cfg.get("kind", "ei"),
                    xi=float(acq_cfg.get("xi", 0.01)),
                    kappa=float(acq_cfg.get("kappa", 2.0)),
                ),
            )
            budget = int(cfg["budget"])
            metric = cfg["metric"]
            bindings: Mapping[str, str] = cfg["bindings"]
            request = ResourceRequest.from_json(cfg.get("request", {"cpu_cores": 1}))
            stored = self.get_pipeline(cfg["pipeline_id"])
            template = PipelineGraph.from_bytes(stored.body)

            attempts = 0
            while len(study.completed) < budget and attempts < 5 * budget:
                attempts += 1
                trial = study.suggest()
                graph = instantiate_template(template, bindings, trial.x)
                body = json.loads(graph.canonical_bytes())
                stored_trial, report = self.put_pipeline(body, rec.owner)
                if stored_trial is None:
                    study.fail(trial.trial_id)
                    continue
                meta = self.submit_task(
                    rec.owner,
                    stored_trial.pipeline_id,
                    request,
                    seed=int(cfg.get("seed", 0)),
                )
                task_id = meta["task"]["task_id"]
                self.wait_task(task_id, timeout=3600.0)
                task_meta = self.get_task(task_id)
                if TaskState(task_meta["task"]["state"]) is not TaskState.SUCCEEDED:
                    study.fail(trial.trial_id)
                else:
                    metrics = self.run_metrics(task_meta["run_id"])
                    if metric not in metrics:
                        study.fail(trial.trial_id)
                    else:
                        study.tell(trial.trial_id, metrics[metric])
                with self._lock:
                    rec.study_json = study.to_json()
                    self._persist_study(rec)
            study.closed = True
            with self._lock:
                rec.study_json = study.to_json()
                rec.status = "finished"
                self._persist_study(rec)
        except Exception:  # noqa: BLE001
            with self._lock:
                rec.status = "failed"
                self._persist_study(rec)


def instantiate_template(
    template: PipelineGraph, bindings: Mapping[str, str], x: Mapping[str, Any]
) -> PipelineGraph:
    """Substitute a trial's assignment into the template's bound node params."""
    from ..graph import Edge, Node

    graph = PipelineGraph(
        name=template.name,
        nodes=[Node(n.node_id, n.tool_ref, dict(n.params)) for n in template.nodes],
        edges=[Edge(e.src, e.dst) for e in template.edges],
        metadata=dict(template.metadata),
    )
    for dim_name, target in bindings.items():
        if dim_name not in x:
            raise ServiceError(f"binding {dim_name!r} has no value in trial assignment")
        node_id, param = target.rsplit(".", 1)
        node = graph.node(node_id)
        if node is None:
            raise ServiceError(f"binding target node {node_id!r} not in template")
        node.params[param] = x[dim_name]
    return graph
