"""Subprocess protocol for external tools.

The child is launched inside the node's working directory sandbox. It receives
one canonical-JSON request on stdin:

    {"params": {...}, "inputs": {"<port>": "<abs path>"}, "outputs": ["<port>", ...],
     "workdir": "<abs path>", "seed": <int>}

and must print one JSON response on stdout:

    {"outputs": {"<port>": "<path>"}, "metrics": [{...}, ...]}   # metrics optional

Exit 0 plus a well-formed response ingests every declared output file into the
artifact store; stderr is streamed line-by-line to the log sink.
"""

from __future__ import annotations

import json
import subprocess
import threading
from pathlib import Path
from typing import Mapping

from ..graph import ToolSpec
from ..registry import ToolContext
from ..store import ArtifactStore
from ..tensorio import MAGIC as TENSOR_MAGIC
from ..values import (
    ArtifactVal,
    Media,
    SemanticType,
    TableVal,
    Value,
    canonical_json_bytes,
)

DEFAULT_TIMEOUT_S = 3600.0
_STDERR_TAIL_LINES = 20

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class ExternalToolError(RuntimeError):
    pass


class NonZeroExit(ExternalToolError):
    def __init__(self, code: int, stderr_tail: str) -> None:
        super().__init__(f"external tool exited {code}; stderr tail:\n{stderr_tail}")
        self.code = code
        self.stderr_tail = stderr_tail


class ProtocolViolation(ExternalToolError):
    """Child produced a malformed or incomplete response."""


class Timeout(ExternalToolError):
    pass


class MissingDeclaredOutput(ExternalToolError):
    pass


def _sniff_media(data: bytes, semantic: SemanticType) -> Media:
    if data[:4] == TENSOR_MAGIC:
        return Media.MD_TENSOR
    if data[:8] == _PNG_MAGIC:
        return Media.PNG
    if semantic is SemanticType.TABLE:
        return Media.CSV
    if semantic in (SemanticType.DATASET, SemanticType.MODEL_BLOB):
        return Media.JSON
    stripped = data.lstrip()
    if stripped[:1] in (b"{", b"["):
        return Media.JSON
    return Media.CSV


def _materialize_inputs(
    store: ArtifactStore, workdir: Path, inputs: Mapping[str, Value]
) -> dict[str, str]:
    paths: dict[str, str] = {}
    in_dir = workdir / "inputs"
    in_dir.mkdir(parents=True, exist_ok=True)
    for port, value in inputs.items():
        if isinstance(value, ArtifactVal):
            ext = {"MDTensor": "mdt", "PNG": "png", "CSV": "csv", "JSON": "json"}[
                value.ref.media.value
            ]
            path = in_dir / f"{port}.{ext}"
            path.write_bytes(store.get(value.ref))
            paths[port] = str(path)
        else:
            # Scalars travel inside params; tables/datasets as JSON sidecars.
            path = in_dir / f"{port}.json"
            from ..values import value_to_json

            path.write_bytes(canonical_json_bytes(value_to_json(value)))
            paths[port] = str(path)
    return paths


def run_external_tool(
    spec: ToolSpec, ctx: ToolContext, timeout_s: float = DEFAULT_TIMEOUT_S
) -> dict[str, Value]:
    """Launch the tool's executable and ingest its declared outputs."""
    if not spec.executable:
        raise ExternalToolError(f"tool {spec.ref} declares no executable")
    exe = Path(spec.executable)
    if not exe.exists():
        raise ExternalToolError(f"executable {exe} not found")

    workdir = ctx.workdir
    workdir.mkdir(parents=True, exist_ok=True)
    request = {
        "params": dict(sorted(ctx.params.items())),
        "inputs": _materialize_inputs(ctx.store, workdir, ctx.inputs),
        "outputs": [p.name for p in spec.outputs],
        "workdir": str(workdir),
        "seed": ctx.seed,
    }

    proc = subprocess.Popen(
        [str(exe)],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        cwd=str(workdir),
        text=True,
    )
    stderr_lines: list[str] = []

    def _pump_stderr() -> None:
        assert proc.stderr is not None
        for line in proc.stderr:
            line = line.rstrip("\n")
            stderr_lines.append(line)
            ctx.log("info", f"[{spec.tool_id}] {line}")

    pump = threading.Thread(target=_pump_stderr, daemon=True)
    pump.start()
    try:
        stdout, _ = proc.communicate(
            input=canonical_json_bytes(request).decode("utf-8"), timeout=timeout_s
        )
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        raise Timeout(f"external tool exceeded {timeout_s} s") from None
    finally:
        pump.join(timeout=5)

    if proc.returncode != 0:
        tail = "\n".join(stderr_lines[-_STDERR_TAIL_LINES:])
        raise NonZeroExit(proc.returncode, tail)

    try:
        response = json.loads(stdout)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(f"response is not valid JSON: {exc}") from None
    if not isinstance(response, dict) or not isinstance(response.get("outputs"), dict):
        raise ProtocolViolation("response must be an object with an 'outputs' map")

    out_paths = response["outputs"]
    outputs: dict[str, Value] = {}
    for port in spec.outputs:
        if port.name == "metrics" and port.semantic is SemanticType.TABLE:
            rows = response.get("metrics")
            if rows is None:
                raise MissingDeclaredOutput("response lacks declared 'metrics' table")
            outputs[port.name] = TableVal(rows=tuple(rows))
            continue
        rel = out_paths.get(port.name)
        if rel is None:
            raise MissingDeclaredOutput(f"response lacks declared output {port.name!r}")
        path = Path(rel)
        if not path.is_absolute():
            path = workdir / path
        if not path.exists():
            raise MissingDeclaredOutput(f"declared output file {path} does not exist")
        data = path.read_bytes()
        ref = ctx.store.put(data, _sniff_media(data, port.semantic))
        outputs[port.name] = ArtifactVal(ref=ref, kind=port.semantic)
    return outputs
