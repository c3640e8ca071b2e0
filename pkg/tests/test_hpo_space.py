from __future__ import annotations

import numpy as np
import pytest

from medas.hpo import CategoricalDim, ContinuousDim, IntegerDim, OutOfBounds, SearchSpace


@pytest.fixture()
def space():
    return SearchSpace(
        dims=(
            IntegerDim("epochs", 64, 256),
            ContinuousDim("learning_rate", 1e-4, 1e-2, log=True),
            CategoricalDim("criterion", ("bce", "dice")),
        )
    )


def test_log_midpoint(space):
    vec = space.encode({"epochs": 64, "learning_rate": 1e-3, "criterion": "bce"})
    assert vec[1] == pytest.approx(0.5)  # 1e-3 is the log midpoint of [1e-4, 1e-2]


def test_integer_lower_bound(space):
    vec = space.encode({"epochs": 64, "learning_rate": 1e-4, "criterion": "bce"})
    assert vec[0] == 0.0


def test_one_hot_width(space):
    assert space.encoded_dim == 1 + 1 + 2
    vec = space.encode({"epochs": 100, "learning_rate": 1e-3, "criterion": "dice"})
    assert list(vec[2:]) == [0.0, 1.0]


def test_decode_encode_roundtrip_1000(space):
    rng = np.random.default_rng(5)
    for _ in range(1000):
        x = {
            "epochs": int(rng.integers(64, 257)),
            "learning_rate": float(10 ** rng.uniform(-4, -2)),
            "criterion": ("bce", "dice")[int(rng.integers(0, 2))],
        }
        decoded = space.decode(space.encode(x))
        assert decoded["epochs"] == x["epochs"]
        assert decoded["learning_rate"] == pytest.approx(x["learning_rate"], rel=1e-9)
        assert decoded["criterion"] == x["criterion"]


def test_out_of_bounds(space):
    with pytest.raises(OutOfBounds):
        space.encode({"epochs": 1000, "learning_rate": 1e-3, "criterion": "bce"})
    with pytest.raises(OutOfBounds):
        space.encode({"epochs": 100, "learning_rate": 1.0, "criterion": "bce"})
    with pytest.raises(OutOfBounds):
        space.encode({"epochs": 100, "learning_rate": 1e-3, "criterion": "lovasz"})


def test_grid_enumeration():
    space = SearchSpace(
        dims=(IntegerDim("a", 0, 2), CategoricalDim("c", ("x", "y")))
    )
    assert space.is_finite
    grid = list(space.grid())
    assert len(grid) == 6
    assert {"a": 0, "c": "x"} in grid


def test_continuous_space_not_finite(space):
    assert not space.is_finite
    with pytest.raises(ValueError):
        list(space.grid())


def test_json_roundtrip(space):
    again = SearchSpace.from_json(space.to_json())
    assert again == space
