"""Pipeline execution engine."""

from .either import Either, Failure, Step, Success, chain_then, either_chain
from .logs import CallbackSink, FileSink, LogEvent, LogSink, RunLogger, TerminalSink, read_ndjson_events
from .runner import (
    CacheUnsound,
    Engine,
    EngineFault,
    ExecuteOptions,
    ExecutionState,
    InvalidPipeline,
    NodeRecord,
    RunRecord,
    cache_key,
    node_seed,
    table_to_csv_bytes,
)

__all__ = [
    "CacheUnsound",
    "CallbackSink",
    "Either",
    "Engine",
    "EngineFault",
    "ExecuteOptions",
    "ExecutionState",
    "Failure",
    "FileSink",
    "InvalidPipeline",
    "LogEvent",
    "LogSink",
    "NodeRecord",
    "RunLogger",
    "RunRecord",
    "Step",
    "Success",
    "TerminalSink",
    "cache_key",
    "chain_then",
    "either_chain",
    "node_seed",
    "read_ndjson_events",
    "table_to_csv_bytes",
]
