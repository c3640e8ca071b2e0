"""Tool registry and the per-execution context handed to tool kernels."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .graph import ToolSpec, parse_tool_ref
from .store import ArtifactStore
from .values import Value


class RegistryError(ValueError):
    pass


@dataclass
class ToolContext:
    """Everything a tool run may touch: inputs, params, store, workdir, rng.

    Randomized tools must draw only from `rng` so identical contexts produce
    identical outputs; that determinism is what makes engine caching sound.
    """

    store: ArtifactStore
    workdir: Path
    inputs: Mapping[str, Value]
    params: Mapping[str, Any]
    seed: int
    log: Callable[[str, str], None] = lambda level, message: None

    _rng: np.random.Generator | None = field(default=None, repr=False)

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = np.random.Generator(np.random.PCG64(self.seed))
        return self._rng

    def param(self, name: str, default: Any = None) -> Any:
        return self.params.get(name, default)

    def info(self, message: str) -> None:
        self.log("info", message)

    def warn(self, message: str) -> None:
        self.log("warn", message)


RunFn = Callable[[ToolContext], Mapping[str, Value]]


@dataclass(frozen=True)
class Tool:
    spec: ToolSpec
    run: RunFn


class ToolRegistry:
    """(tool_id, version) -> Tool lookup shared by validator, engine, and service."""

    def __init__(self) -> None:
        self._tools: dict[tuple[str, str], Tool] = {}

    def register(self, spec: ToolSpec, run: RunFn) -> None:
        key = (spec.tool_id, spec.version)
        if key in self._tools:
            raise RegistryError(f"tool {spec.ref} already registered")
        self._tools[key] = Tool(spec=spec, run=run)

    def find(self, ref: str) -> ToolSpec | None:
        try:
            key = parse_tool_ref(ref)
        except ValueError:
            return None
        tool = self._tools.get(key)
        return tool.spec if tool else None

    def get(self, ref: str) -> Tool:
        tool = self._tools.get(parse_tool_ref(ref))
        if tool is None:
            raise RegistryError(f"tool {ref!r} is not registered")
        return tool

    def specs(self) -> list[ToolSpec]:
        return [t.spec for _, t in sorted(self._tools.items())]

    def __contains__(self, ref: str) -> bool:
        return self.find(ref) is not None
