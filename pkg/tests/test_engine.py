from __future__ import annotations

import json
import threading

import numpy as np
import pytest

from medas.engine import (
    ExecuteOptions,
    ExecutionState,
    Failure,
    Success,
    chain_then,
    either_chain,
    read_ndjson_events,
)
from medas.engine.runner import IllegalTransition, NodeRecord, node_seed
from medas.graph import (
    Direction,
    Edge,
    Node,
    ParamSpec,
    PipelineGraph,
    PortSpec,
    ToolCategory,
    ToolSpec,
)
from medas.values import FloatVal, SemanticType, TextVal

# Either laws -----------------------------------------------------------------


def test_chain_success_passes_value():
    result = either_chain(1, [("a", lambda v: v + 1), ("b", lambda v: v * 10)])
    assert isinstance(result, Success) and result.value == 20


def test_chain_short_circuits():
    seen = []

    def boom(_):
        raise RuntimeError("nope")

    def probe(v):
        seen.append(v)
        return v

    result = either_chain(0, [("set_params", boom), ("bind", probe)])
    assert isinstance(result, Failure)
    assert result.failed_step == "set_params"
    assert seen == []  # later steps never invoked


def test_empty_chain_is_identity():
    result = either_chain("initial", [])
    assert isinstance(result, Success) and result.value == "initial"


def test_chain_associativity_success_and_failure():
    inc = ("inc", lambda v: v + 1)
    dbl = ("dbl", lambda v: v * 2)

    def raising(_):
        raise ValueError("x")

    bad = ("bad", raising)

    for steps in ([inc, dbl, bad], [inc, dbl], [bad, inc]):
        left = chain_then(either_chain(3, steps[:1]), steps[1:])
        right = either_chain(3, steps)
        assert type(left) is type(right)
        if isinstance(left, Failure):
            assert left.failed_step == right.failed_step
        else:
            assert left.value == right.value


# Execution fixtures ----------------------------------------------------------


def chain_graph(n: int, width_of: dict[int, float] | None = None) -> PipelineGraph:
    """blobs -> window_level x (n-1): every stage transforms the dataset."""
    width_of = width_of or {}
    nodes = [Node("n0", "medas.dataset.synthetic_blobs@1.0.0", {"n_items": 2, "seed": 1})]
    edges = []
    for i in range(1, n):
        nodes.append(
            Node(
                f"n{i}",
                "medas.dataset.window_level@1.0.0",
                {"width": width_of.get(i, 1.0 + i * 0.1), "level": 0.5},
            )
        )
        edges.append(Edge(f"n{i-1}.dataset", f"n{i}.dataset"))
    return PipelineGraph(name="chain", nodes=nodes, edges=edges)


def test_rerun_identical_pipeline_all_cache_hits(engine):
    g = chain_graph(8)
    first = engine.execute(g, ExecuteOptions(seed=3, run_id="r1"))
    assert first.status == "succeeded"
    assert len(first.executed_nodes) == 8
    second = engine.execute(g, ExecuteOptions(seed=3, run_id="r2"))
    assert second.executed_nodes == []
    assert all(r.state is ExecutionState.CACHE_HIT for r in second.nodes.values())


def test_param_change_reexecutes_exactly_downstream(engine):
    g = chain_graph(8)
    engine.execute(g, ExecuteOptions(seed=3, run_id="r1"))
    g2 = chain_graph(8, width_of={3: 9.0})
    record = engine.execute(g2, ExecuteOptions(seed=3, run_id="r2"))
    assert sorted(record.executed_nodes) == ["n3", "n4", "n5", "n6", "n7"]
    for nid in ("n0", "n1", "n2"):
        assert record.nodes[nid].state is ExecutionState.CACHE_HIT


def test_cache_outputs_identical_to_execution(engine):
    g = chain_graph(4)
    first = engine.execute(g, ExecuteOptions(seed=3, run_id="r1"))
    # Forced re-execution of every cache hit must reproduce identical values.
    verified = engine.execute(
        g, ExecuteOptions(seed=3, run_id="r2", verify_cache_fraction=1.0)
    )
    for nid, rec in verified.nodes.items():
        assert rec.state is ExecutionState.CACHE_HIT
        assert rec.outputs == first.nodes[nid].outputs


FAIL_TOOL_ID = "test.failing.tool"


def register_failing_tool(registry):
    if f"{FAIL_TOOL_ID}@1.0.0" in registry:
        return
    spec = ToolSpec(
        tool_id=FAIL_TOOL_ID,
        version="1.0.0",
        category=ToolCategory.PRE_PROCESS,
        inputs=(PortSpec("dataset", Direction.IN, SemanticType.DATASET),),
        outputs=(PortSpec("dataset", Direction.OUT, SemanticType.DATASET),),
    )

    def run(ctx):
        raise RuntimeError("deliberate tool failure")

    registry.register(spec, run)


def diamond_with_failure() -> PipelineGraph:
    return PipelineGraph(
        name="diamond",
        nodes=[
            Node("a", "medas.dataset.synthetic_blobs@1.0.0", {"n_items": 2, "seed": 1}),
            Node("b", f"{FAIL_TOOL_ID}@1.0.0", {}),
            Node("c", "medas.dataset.window_level@1.0.0", {}),
            Node("d", "medas.dataset.split@1.0.0", {}),
        ],
        edges=[
            Edge("a.dataset", "b.dataset"),
            Edge("a.dataset", "c.dataset"),
            Edge("b.dataset", "d.dataset"),
        ],
    )


def test_diamond_failure_skips_downstream_only(engine, registry):
    register_failing_tool(registry)
    record = engine.execute(diamond_with_failure(), ExecuteOptions(run_id="r1"))
    assert record.status == "failed"
    assert record.nodes["a"].state is ExecutionState.SUCCEEDED
    assert record.nodes["b"].state is ExecutionState.FAILED
    assert record.nodes["c"].state is ExecutionState.SUCCEEDED  # independent branch
    assert record.nodes["d"].state is ExecutionState.SKIPPED_UPSTREAM_FAILURE
    assert record.nodes["b"].failed_step == "run"


def test_error_event_precedes_failed_state(engine, registry, tmp_path):
    register_failing_tool(registry)
    record = engine.execute(diamond_with_failure(), ExecuteOptions(run_id="r2"))
    events = read_ndjson_events(engine.runs_dir / "r2" / "logs.ndjson")
    error_events = [e for e in events if e["level"] == "error" and e["node_id"] == "b"]
    assert error_events, "node failure must emit an error event"
    assert record.nodes["b"].error is not None
    # Field names are the persisted contract.
    assert set(events[0].keys()) == {"ts", "run_id", "node_id", "level", "message", "fields"}
    ts = [e["ts"] for e in events]
    assert ts == sorted(ts)


def test_multiple_sinks_receive_identical_sequences(engine):
    from medas.engine import CallbackSink

    seen_a, seen_b = [], []
    g = chain_graph(3)
    engine.execute(
        g,
        ExecuteOptions(
            run_id="r3",
            extra_sinks=(CallbackSink(seen_a.append), CallbackSink(seen_b.append)),
        ),
    )
    assert [e.message for e in seen_a] == [e.message for e in seen_b]
    file_events = read_ndjson_events(engine.runs_dir / "r3" / "logs.ndjson")
    assert [e["message"] for e in file_events] == [e.message for e in seen_a]


def test_structured_fields_roundtrip(engine):
    g = chain_graph(2)
    engine.execute(g, ExecuteOptions(run_id="r4"))
    events = read_ndjson_events(engine.runs_dir / "r4" / "logs.ndjson")
    start = [e for e in events if e["message"] == "run started"][0]
    assert start["fields"] == {"pipeline_hash": g.logical_hash()}


def test_deterministic_outputs_for_fixed_seed(engine):
    g = chain_graph(3)
    a = engine.execute(g, ExecuteOptions(seed=11, run_id="ra", cache=False))
    b = engine.execute(g, ExecuteOptions(seed=11, run_id="rb", cache=False))
    for nid in a.nodes:
        assert a.nodes[nid].outputs == b.nodes[nid].outputs


def test_node_seed_derivation_stable():
    assert node_seed(1, "a") == node_seed(1, "a")
    assert node_seed(1, "a") != node_seed(1, "b")
    assert node_seed(1, "a") != node_seed(2, "a")


def test_terminal_states_immutable():
    rec = NodeRecord(state=ExecutionState.SUCCEEDED)
    with pytest.raises(IllegalTransition):
        rec.transition(ExecutionState.RUNNING)
    rec2 = NodeRecord(state=ExecutionState.BLOCKED)
    with pytest.raises(IllegalTransition):
        rec2.transition(ExecutionState.SUCCEEDED)  # must pass through Running


def test_run_record_persisted_and_resumable(engine):
    g = chain_graph(3)
    record = engine.execute(g, ExecuteOptions(run_id="r5"))
    loaded = engine.load_record("r5")
    assert loaded.status == record.status
    assert {n: r.state for n, r in loaded.nodes.items()} == {
        n: r.state for n, r in record.nodes.items()
    }


def test_dependency_edges_never_run_concurrently(engine, registry):
    """Safety: no instant has two Running nodes joined by an edge."""
    spans = {}
    lock = threading.Lock()
    tool_id = "test.span.tool"
    if f"{tool_id}@1.0.0" not in registry:

        def run(ctx):
            import time

            start = time.monotonic()
            time.sleep(0.02)
            with lock:
                spans[ctx.params["name"]] = (start, time.monotonic())
            return {"x": TextVal("ok")}

        registry.register(
            ToolSpec(
                tool_id=tool_id,
                version="1.0.0",
                category=ToolCategory.PRE_PROCESS,
                params=(ParamSpec("name", SemanticType.TEXT, "n"),),
                inputs=(PortSpec("x", Direction.IN, SemanticType.TEXT, required=False),),
                outputs=(PortSpec("x", Direction.OUT, SemanticType.TEXT),),
            ),
            run,
        )
    g = PipelineGraph(
        name="safety",
        nodes=[
            Node("a", f"{tool_id}@1.0.0", {"name": "a"}),
            Node("b", f"{tool_id}@1.0.0", {"name": "b"}),
            Node("c", f"{tool_id}@1.0.0", {"name": "c"}),
        ],
        edges=[Edge("a.x", "b.x"), Edge("b.x", "c.x")],
    )
    engine.execute(g, ExecuteOptions(run_id="r6", cache=False, max_workers=4))
    for up, down in (("a", "b"), ("b", "c")):
        assert spans[up][1] <= spans[down][0]  # upstream ends before downstream starts
