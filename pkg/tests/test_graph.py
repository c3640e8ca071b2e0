from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medas.graph import (
    CycleDetected,
    DiagnosticCode,
    Edge,
    Node,
    PipelineGraph,
    topo_order,
    validate_graph,
)

D = DiagnosticCode


def g(nodes, edges, name="t"):
    return PipelineGraph(name=name, nodes=nodes, edges=edges)


def codes(report):
    return {d.code for d in report.diagnostics}


def test_two_node_chain_validates(registry):
    graph = g(
        [
            Node("load", "medas.input.image@1.0.0", {"artifact": "0" * 64}),
            Node("rescale", "medas.image.window_level@1.0.0", {}),
        ],
        [Edge("load.image", "rescale.image")],
    )
    assert validate_graph(graph, registry).ok


def test_cycle_detected(registry):
    graph = g(
        [
            Node("a", "medas.image.zscore@1.0.0", {}),
            Node("b", "medas.image.zscore@1.0.0", {}),
        ],
        [Edge("a.image", "b.image"), Edge("b.image", "a.image")],
    )
    assert D.CYCLE_DETECTED in codes(validate_graph(graph, registry))


def test_type_mismatch_float_into_dataset(registry):
    graph = g(
        [
            Node("m", "medas.metric.mean_dice@1.0.0", {}),
            Node("s", "medas.dataset.split@1.0.0", {}),
            Node("src", "medas.dataset.synthetic_blobs@1.0.0", {}),
        ],
        [Edge("src.dataset", "m.dataset"), Edge("m.value", "s.dataset")],
    )
    assert D.TYPE_MISMATCH in codes(validate_graph(graph, registry))


def test_unknown_tool(registry):
    graph = g([Node("a", "medas.missing.tool@1.0.0", {})], [])
    assert D.UNKNOWN_TOOL in codes(validate_graph(graph, registry))


def test_unbound_required_port(registry):
    graph = g([Node("z", "medas.image.zscore@1.0.0", {})], [])
    assert D.UNBOUND_REQUIRED_PORT in codes(validate_graph(graph, registry))


def test_duplicate_edge_into_port(registry):
    graph = g(
        [
            Node("a", "medas.dataset.synthetic_blobs@1.0.0", {}),
            Node("b", "medas.dataset.synthetic_blobs@1.0.0", {}),
            Node("s", "medas.dataset.split@1.0.0", {}),
        ],
        [Edge("a.dataset", "s.dataset"), Edge("b.dataset", "s.dataset")],
    )
    assert D.DUPLICATE_EDGE in codes(validate_graph(graph, registry))


def test_duplicate_node_id(registry):
    graph = g(
        [
            Node("a", "medas.dataset.synthetic_blobs@1.0.0", {}),
            Node("a", "medas.dataset.synthetic_blobs@1.0.0", {}),
        ],
        [],
    )
    assert D.DUPLICATE_NODE in codes(validate_graph(graph, registry))


def test_bad_param_range(registry):
    graph = g([Node("s", "medas.dataset.synthetic_blobs@1.0.0", {"n_items": 1})], [])
    assert D.BAD_PARAM in codes(validate_graph(graph, registry))


def test_unknown_port(registry):
    graph = g(
        [
            Node("a", "medas.dataset.synthetic_blobs@1.0.0", {}),
            Node("s", "medas.dataset.split@1.0.0", {}),
        ],
        [Edge("a.nope", "s.dataset")],
    )
    assert D.UNKNOWN_PORT in codes(validate_graph(graph, registry))


# topo ordering --------------------------------------------------------------


def _edgeless(ids):
    return [Node(i, "medas.image.zscore@1.0.0", {}) for i in ids]


def test_topo_diamond_lexicographic():
    graph = g(
        _edgeless(["a", "b", "c", "d"]),
        [
            Edge("a.image", "b.image"),
            Edge("a.image", "c.image"),
            Edge("b.image", "d.image"),
            Edge("c.image", "d.image"),
        ],
    )
    assert topo_order(graph) == ["a", "b", "c", "d"]


def test_topo_single_node():
    graph = g(_edgeless(["only"]), [])
    assert topo_order(graph) == ["only"]


def test_topo_chain_of_five():
    ids = ["n1", "n2", "n3", "n4", "n5"]
    graph = g(
        _edgeless(ids),
        [Edge(f"{a}.image", f"{b}.image") for a, b in zip(ids, ids[1:])],
    )
    assert topo_order(graph) == ids


def test_topo_raises_on_cycle():
    graph = g(_edgeless(["a", "b"]), [Edge("a.image", "b.image"), Edge("b.image", "a.image")])
    with pytest.raises(CycleDetected):
        topo_order(graph)


def test_validated_graph_edges_respect_topo(registry):
    graph = g(
        [
            Node("blobs", "medas.dataset.synthetic_blobs@1.0.0", {}),
            Node("split", "medas.dataset.split@1.0.0", {}),
            Node("train", "medas.model.train@1.0.0", {}),
        ],
        [Edge("blobs.dataset", "split.dataset"), Edge("split.train", "train.train")],
    )
    assert validate_graph(graph, registry).ok
    order = topo_order(graph)
    pos = {nid: i for i, nid in enumerate(order)}
    for e in graph.edges:
        assert pos[e.src_node] < pos[e.dst_node]


# serialization ---------------------------------------------------------------


_param_values = st.one_of(
    st.integers(min_value=-(10**6), max_value=10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
    st.booleans(),
    st.text(max_size=12),
)


@settings(max_examples=100, deadline=None)
@given(
    params=st.dictionaries(
        st.from_regex(r"[a-z][a-z0-9_]{0,8}", fullmatch=True), _param_values, max_size=4
    ),
    name=st.text(max_size=20),
)
def test_canonical_roundtrip_stable(params, name):
    graph = PipelineGraph(
        name=name,
        nodes=[Node("a", "medas.image.zscore@1.0.0", params)],
        edges=[],
        metadata={"k": "v"},
    )
    data = graph.canonical_bytes()
    again = PipelineGraph.from_bytes(data)
    assert again.canonical_bytes() == data
    assert again.content_hash() == graph.content_hash()


def test_logical_hash_ignores_ui_metadata(registry):
    base = PipelineGraph(
        name="x",
        nodes=[Node("a", "medas.dataset.synthetic_blobs@1.0.0", {})],
        edges=[],
        metadata={},
    )
    moved = PipelineGraph(
        name="x",
        nodes=[Node("a", "medas.dataset.synthetic_blobs@1.0.0", {})],
        edges=[],
        metadata={"ui": {"positions": {"a": [10, 20]}}},
    )
    assert base.logical_hash() == moved.logical_hash()
    assert base.content_hash() != moved.content_hash()


def test_node_order_does_not_change_hash():
    n1 = Node("a", "medas.image.zscore@1.0.0", {})
    n2 = Node("b", "medas.image.zscore@1.0.0", {})
    g1 = PipelineGraph(name="x", nodes=[n1, n2], edges=[])
    g2 = PipelineGraph(name="x", nodes=[n2, n1], edges=[])
    assert g1.content_hash() == g2.content_hash()
