from __future__ import annotations

import pytest

from medas.engine import Engine
from medas.registry import ToolRegistry
from medas.store import ArtifactStore
from medas.tools import build_default_registry


@pytest.fixture(scope="session")
def registry() -> ToolRegistry:
    return build_default_registry()


@pytest.fixture()
def store(tmp_path) -> ArtifactStore:
    return ArtifactStore(tmp_path / "store")


@pytest.fixture()
def engine(tmp_path, store, registry) -> Engine:
    return Engine(store, registry, tmp_path / "runs", tmp_path / "cache")
