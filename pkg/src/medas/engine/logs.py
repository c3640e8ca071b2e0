"""Structured run logging: ordered events fanned out to pluggable sinks.

Events serialize as ndjson with exactly the fields
ts, run_id, node_id, level, message, fields.
"""

from __future__ import annotations

import json
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

LEVELS = ("debug", "info", "warn", "error")


@dataclass(frozen=True)
class LogEvent:
    ts: float
    run_id: str
    node_id: str | None
    level: str
    message: str
    fields: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "ts": self.ts,
            "run_id": self.run_id,
            "node_id": self.node_id,
            "level": self.level,
            "message": self.message,
            "fields": dict(self.fields),
        }


class LogSink(Protocol):
    def emit(self, event: LogEvent) -> None: ...

    def flush(self) -> None: ...


class TerminalSink:
    def __init__(self, stream=None) -> None:
        self.stream = stream if stream is not None else sys.stderr

    def emit(self, event: LogEvent) -> None:
        node = f" [{event.node_id}]" if event.node_id else ""
        self.stream.write(f"{event.level:<5} {event.run_id}{node} {event.message}\n")

    def flush(self) -> None:
        self.stream.flush()


class FileSink:
    """Appends one JSON event per line; flushed per event so crashes lose nothing."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def emit(self, event: LogEvent) -> None:
        self._fh.write(json.dumps(event.to_json(), sort_keys=True) + "\n")
        self._fh.flush()

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


class CallbackSink:
    """Forwards events to a callable (the service's live-stream hook)."""

    def __init__(self, fn: Callable[[LogEvent], None]) -> None:
        self.fn = fn

    def emit(self, event: LogEvent) -> None:
        self.fn(event)

    def flush(self) -> None:
        pass


class RunLogger:
    """Thread-safe, totally ordered event emitter for one run.

    Timestamps are forced strictly increasing so downstream consumers can
    order by ts alone. A sink that raises is degraded to a terminal fallback
    rather than aborting the run.
    """

    def __init__(self, run_id: str, sinks: Sequence[LogSink]) -> None:
        self.run_id = run_id
        self.sinks = list(sinks)
        self._lock = threading.Lock()
        self._last_ts = 0.0
        self._fallback = TerminalSink()

    def emit(
        self,
        level: str,
        message: str,
        node_id: str | None = None,
        fields: Mapping[str, Any] | None = None,
    ) -> LogEvent:
        if level not in LEVELS:
            raise ValueError(f"unknown log level {level!r}")
        with self._lock:
            ts = max(time.time(), self._last_ts + 1e-6)
            self._last_ts = ts
            event = LogEvent(
                ts=ts,
                run_id=self.run_id,
                node_id=node_id,
                level=level,
                message=message,
                fields=dict(fields or {}),
            )
            for sink in self.sinks:
                try:
                    sink.emit(event)
                except Exception:  # noqa: BLE001 - sink faults must not kill runs
                    try:
                        self._fallback.emit(event)
                    except Exception:
                        pass
        return event

    def flush(self) -> None:
        with self._lock:
            for sink in self.sinks:
                try:
                    sink.flush()
                except Exception:
                    pass


def read_ndjson_events(path: str | Path) -> list[dict[str, Any]]:
    out = []
    p = Path(path)
    if not p.exists():
        return out
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
