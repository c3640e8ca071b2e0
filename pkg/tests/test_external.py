from __future__ import annotations

import json
import stat
import textwrap
from pathlib import Path

import pytest

from medas.graph import Direction, PortSpec, ToolCategory, ToolSpec
from medas.registry import ToolContext
from medas.tools.external import (
    MissingDeclaredOutput,
    NonZeroExit,
    ProtocolViolation,
    Timeout,
    run_external_tool,
)
from medas.values import ArtifactVal, Media, SemanticType


def write_tool(path: Path, body: str) -> Path:
    path.write_text("#!/usr/bin/env python3\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return path


def make_spec(exe: Path, outputs=(("out", SemanticType.IMAGE),)) -> ToolSpec:
    return ToolSpec(
        tool_id="ext.test.tool",
        version="1.0.0",
        category=ToolCategory.MODEL,
        inputs=(PortSpec("inp", Direction.IN, SemanticType.IMAGE),),
        outputs=tuple(PortSpec(n, Direction.OUT, s) for n, s in outputs),
        executable=str(exe),
    )


def make_ctx(store, tmp_path, inputs) -> ToolContext:
    logs = []
    return ToolContext(
        store=store,
        workdir=tmp_path / "work",
        inputs=inputs,
        params={"alpha": 2},
        seed=99,
        log=lambda level, message: logs.append((level, message)),
    ), logs


ECHO_TOOL = """
    import json, shutil, sys
    req = json.load(sys.stdin)
    src = req["inputs"]["inp"]
    dst = req["workdir"] + "/copy.bin"
    shutil.copy(src, dst)
    print("copied one artifact", file=sys.stderr)
    print(json.dumps({"outputs": {"out": dst}}))
"""


def test_echo_tool_roundtrips_artifact(store, tmp_path):
    import numpy as np

    exe = write_tool(tmp_path / "echo.py", ECHO_TOOL)
    val = store.put_tensor(np.arange(6, dtype=np.float32).reshape(2, 3), SemanticType.IMAGE)
    ctx, logs = make_ctx(store, tmp_path, {"inp": val})
    outputs = run_external_tool(make_spec(exe), ctx)
    assert isinstance(outputs["out"], ArtifactVal)
    assert outputs["out"].ref.hash == val.ref.hash  # identity tool
    assert outputs["out"].ref.media is Media.MD_TENSOR
    assert any("copied one artifact" in m for _, m in logs)


def test_nonzero_exit(store, tmp_path):
    exe = write_tool(tmp_path / "fail.py", """
        import sys
        print("boom", file=sys.stderr)
        sys.exit(3)
    """)
    ctx, _ = make_ctx(store, tmp_path, {})
    with pytest.raises(NonZeroExit) as err:
        run_external_tool(make_spec(exe), ctx)
    assert err.value.code == 3
    assert "boom" in err.value.stderr_tail


def test_invalid_json_response(store, tmp_path):
    exe = write_tool(tmp_path / "badjson.py", """
        print("this is not json")
    """)
    ctx, _ = make_ctx(store, tmp_path, {})
    with pytest.raises(ProtocolViolation):
        run_external_tool(make_spec(exe), ctx)


def test_missing_declared_output(store, tmp_path):
    exe = write_tool(tmp_path / "empty.py", """
        import json
        print(json.dumps({"outputs": {}}))
    """)
    ctx, _ = make_ctx(store, tmp_path, {})
    with pytest.raises(MissingDeclaredOutput):
        run_external_tool(make_spec(exe), ctx)


def test_timeout_kills_child(store, tmp_path):
    exe = write_tool(tmp_path / "sleep.py", """
        import time
        time.sleep(60)
    """)
    ctx, _ = make_ctx(store, tmp_path, {})
    with pytest.raises(Timeout):
        run_external_tool(make_spec(exe), ctx, timeout_s=0.5)


def test_metrics_table_output(store, tmp_path):
    exe = write_tool(tmp_path / "metrics.py", """
        import json, sys
        req = json.load(sys.stdin)
        open(req["workdir"] + "/m.csv", "w").write("a,b\\n1,2\\n")
        print(json.dumps({"outputs": {"out": "m.csv"},
                          "metrics": [{"metric": "score", "value": 0.5}]}))
    """)
    spec = make_spec(
        tmp_path / "metrics.py",
        outputs=(("out", SemanticType.TABLE), ("metrics", SemanticType.TABLE)),
    )
    ctx, _ = make_ctx(store, tmp_path, {})
    outputs = run_external_tool(spec, ctx)
    assert outputs["metrics"].rows[0]["metric"] == "score"
