"""Resource-quota task scheduler: admission, strict-FIFO queueing, lifecycle.

One logical state machine; every submit/complete/kill serializes through the
instance lock. Physically impossible requests (exceeding the inventory or the
account's absolute cap) fail fast as Unsatisfiable; temporarily blocked tasks
queue in strict submission order with no backfill: the head of the queue
blocks everything behind it, which keeps the mental model predictable.

Every transition appends one ndjson event
{ts, event, task_id, account, request, free_after} to the event log.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping

from .graph import ResourceRequest


class SchedulerError(Exception):
    pass


class UnknownAccount(SchedulerError):
    pass


class UnknownTask(SchedulerError):
    pass


class AlreadyTerminal(SchedulerError):
    pass


class TaskState(str, Enum):
    PENDING = "Pending"
    QUEUED = "Queued"
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"
    KILLED = "Killed"


TERMINAL_TASK_STATES = {TaskState.SUCCEEDED, TaskState.FAILED, TaskState.KILLED}


@dataclass(frozen=True)
class Allocation:
    request: ResourceRequest
    gpu_ids: tuple[str, ...]


@dataclass
class Task:
    task_id: str
    account: str
    pipeline_hash: str
    request: ResourceRequest
    state: TaskState = TaskState.PENDING
    reason: str | None = None
    alloc: Allocation | None = None
    submitted_at: float = 0.0
    started_at: float | None = None
    ended_at: float | None = None
    seq: int = 0  # submission tiebreaker for equal timestamps

    def to_json(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "account": self.account,
            "pipeline_hash": self.pipeline_hash,
            "request": self.request.to_json(),
            "state": self.state.value,
            "reason": self.reason,
            "gpu_ids": list(self.alloc.gpu_ids) if self.alloc else None,
            "submitted_at": self.submitted_at,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "seq": self.seq,
        }


@dataclass(frozen=True)
class Inventory:
    total: ResourceRequest
    gpu_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.gpu_ids) != self.total.gpus:
            raise ValueError(
                f"inventory lists {len(self.gpu_ids)} gpu ids for total.gpus={self.total.gpus}"
            )

    @classmethod
    def of(cls, cpu_cores: int, gpus: int, mem_mb: int) -> Inventory:
        return cls(
            total=ResourceRequest(cpu_cores=cpu_cores, gpus=gpus, mem_mb=mem_mb),
            gpu_ids=tuple(f"gpu{i}" for i in range(gpus)),
        )

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> Inventory:
        total = ResourceRequest.from_json(obj)
        gpu_ids = tuple(obj.get("gpu_ids", ()) or (f"gpu{i}" for i in range(total.gpus)))
        return cls(total=total, gpu_ids=gpu_ids)


class Scheduler:
    def __init__(
        self,
        inventory: Inventory,
        quotas: Mapping[str, ResourceRequest],
        clock: Callable[[], float] | None = None,
        event_log_path: str | Path | None = None,
    ) -> None:
        self.inventory = inventory
        self.quotas = dict(quotas)
        self.clock = clock or time.time
        self._lock = threading.RLock()
        self._tasks: dict[str, Task] = {}
        self._queue: list[str] = []  # strict FIFO by (submitted_at, seq)
        self._free = inventory.total
        self._free_gpus: list[str] = list(inventory.gpu_ids)
        self._running_by_account: dict[str, ResourceRequest] = {}
        self._seq = itertools.count()
        self._events: list[dict[str, Any]] = []
        self._event_log_path = Path(event_log_path) if event_log_path else None
        if self._event_log_path:
            self._event_log_path.parent.mkdir(parents=True, exist_ok=True)

    # Introspection ----------------------------------------------------------

    def task(self, task_id: str) -> Task:
        with self._lock:
            if task_id not in self._tasks:
                raise UnknownTask(task_id)
            return self._tasks[task_id]

    def tasks(self) -> list[Task]:
        with self._lock:
            return sorted(self._tasks.values(), key=lambda t: (t.submitted_at, t.seq))

    @property
    def free(self) -> ResourceRequest:
        with self._lock:
            return self._free

    @property
    def events(self) -> list[dict[str, Any]]:
        with self._lock:
            return list(self._events)

    def account_running(self, account: str) -> ResourceRequest:
        with self._lock:
            return self._running_by_account.get(account, ResourceRequest())

    # Events -------------------------------------------------------------------

    def _emit(self, event: str, task: Task) -> None:
        entry = {
            "ts": self.clock(),
            "event": event,
            "task_id": task.task_id,
            "account": task.account,
            "request": task.request.to_json(),
            "free_after": self._free.to_json(),
        }
        self._events.append(entry)
        if self._event_log_path:
            with open(self._event_log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    # Core state machine ---------------------------------------------------------

    def _quota_headroom(self, task: Task) -> bool:
        used = self._running_by_account.get(task.account, ResourceRequest())
        return used.plus(task.request).fits_within(self.quotas[task.account])

    def _start(self, task: Task) -> None:
        gpu_ids = tuple(self._free_gpus[: task.request.gpus])
        del self._free_gpus[: task.request.gpus]
        self._free = self._free.minus(task.request)
        used = self._running_by_account.get(task.account, ResourceRequest())
        self._running_by_account[task.account] = used.plus(task.request)
        task.alloc = Allocation(request=task.request, gpu_ids=gpu_ids)
        task.state = TaskState.RUNNING
        task.started_at = self.clock()
        self._emit("started", task)

    def _release(self, task: Task) -> None:
        assert task.alloc is not None
        self._free = self._free.plus(task.alloc.request)
        self._free_gpus.extend(task.alloc.gpu_ids)
        used = self._running_by_account[task.account].minus(task.alloc.request)
        self._running_by_account[task.account] = used
        task.alloc = None

    def _drain_queue(self) -> list[Task]:
        """Start queued tasks head-first; stop at the first one that cannot start."""
        started: list[Task] = []
        while self._queue:
            head = self._tasks[self._queue[0]]
            if head.request.fits_within(self._free) and self._quota_headroom(head):
                self._queue.pop(0)
                self._start(head)
                started.append(head)
            else:
                break
        return started

    # Operations -------------------------------------------------------------------

    def submit(
        self,
        task_id: str,
        account: str,
        pipeline_hash: str,
        request: ResourceRequest,
    ) -> Task:
        with self._lock:
            if account not in self.quotas:
                raise UnknownAccount(account)
            if task_id in self._tasks:
                raise SchedulerError(f"task id {task_id!r} already submitted")
            task = Task(
                task_id=task_id,
                account=account,
                pipeline_hash=pipeline_hash,
                request=request,
                submitted_at=self.clock(),
                seq=next(self._seq),
            )
            self._tasks[task_id] = task
            self._emit("submitted", task)
            if not request.fits_within(self.inventory.total) or not request.fits_within(
                self.quotas[account]
            ):
                task.state = TaskState.FAILED
                task.reason = "Unsatisfiable"
                task.ended_at = self.clock()
                self._emit("failed", task)
                return task
            if (
                not self._queue
                and request.fits_within(self._free)
                and self._quota_headroom(task)
            ):
                self._start(task)
            else:
                task.state = TaskState.QUEUED
                self._queue.append(task_id)
                self._emit("queued", task)
            return task

    def on_completion(self, task_id: str, outcome: str, reason: str | None = None) -> list[Task]:
        """Report a Running task's exit; returns tasks started by the freed space."""
        with self._lock:
            task = self.task(task_id)
            if task.state is not TaskState.RUNNING:
                raise SchedulerError(f"task {task_id} is {task.state.value}, not Running")
            if outcome not in ("succeeded", "failed"):
                raise ValueError("outcome must be 'succeeded' or 'failed'")
            self._release(task)
            task.state = TaskState.SUCCEEDED if outcome == "succeeded" else TaskState.FAILED
            task.reason = reason
            task.ended_at = self.clock()
            self._emit("completed" if outcome == "succeeded" else "failed", task)
            return self._drain_queue()

    def kill(self, task_id: str) -> tuple[Task, list[Task]]:
        """Kill a non-terminal task; returns (task, tasks started by freed space)."""
        with self._lock:
            task = self.task(task_id)
            if task.state in TERMINAL_TASK_STATES:
                raise AlreadyTerminal(f"task {task_id} is already {task.state.value}")
            started: list[Task] = []
            if task.state is TaskState.RUNNING:
                self._release(task)
                task.state = TaskState.KILLED
                task.ended_at = self.clock()
                self._emit("killed", task)
                started = self._drain_queue()
            else:
                if task.task_id in self._queue:
                    self._queue.remove(task.task_id)
                task.state = TaskState.KILLED
                task.ended_at = self.clock()
                self._emit("killed", task)
            return task, started

    # Sandbox plumbing -----------------------------------------------------------

    def worker_env(self, task_id: str) -> dict[str, str]:
        """Environment communicating the allocation to a worker process."""
        task = self.task(task_id)
        if task.alloc is None:
            raise SchedulerError(f"task {task_id} holds no allocation")
        return {
            "MEDAS_VISIBLE_GPUS": ",".join(task.alloc.gpu_ids),
            "MEDAS_CPU_CORES": str(task.alloc.request.cpu_cores),
            "MEDAS_MEM_MB": str(task.alloc.request.mem_mb),
        }
