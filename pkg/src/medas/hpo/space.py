"""Hyper-parameter search space and its unit-cube encoding.

Continuous dims map affinely onto [0, 1] (log dims through log10 first),
integer dims the same with round-on-decode, categorical dims one-hot. The
encoded vector length is 1 per continuous/integer dim plus the choice count
per categorical dim.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Sequence

import numpy as np


class OutOfBounds(ValueError):
    pass


@dataclass(frozen=True)
class ContinuousDim:
    name: str
    low: float
    high: float
    log: bool = False

    def __post_init__(self) -> None:
        if not self.low < self.high:
            raise ValueError(f"dim {self.name!r}: low must be < high")
        if self.log and self.low <= 0:
            raise ValueError(f"dim {self.name!r}: log dims need low > 0")

    @property
    def width(self) -> int:
        return 1

    def encode(self, v: Any) -> list[float]:
        v = float(v)
        if not self.low <= v <= self.high:
            raise OutOfBounds(f"{self.name}={v} outside [{self.low}, {self.high}]")
        if self.log:
            return [(math.log10(v) - math.log10(self.low)) / (math.log10(self.high) - math.log10(self.low))]
        return [(v - self.low) / (self.high - self.low)]

    def decode(self, u: Sequence[float]) -> float:
        t = min(max(float(u[0]), 0.0), 1.0)
        if self.log:
            return 10 ** (math.log10(self.low) + t * (math.log10(self.high) - math.log10(self.low)))
        return self.low + t * (self.high - self.low)

    def to_json(self) -> dict[str, Any]:
        return {"kind": "continuous", "name": self.name, "low": self.low, "high": self.high, "log": self.log}


@dataclass(frozen=True)
class IntegerDim:
    name: str
    low: int
    high: int

    def __post_init__(self) -> None:
        if not self.low < self.high:
            raise ValueError(f"dim {self.name!r}: low must be < high")

    @property
    def width(self) -> int:
        return 1

    def encode(self, v: Any) -> list[float]:
        v = int(v)
        if not self.low <= v <= self.high:
            raise OutOfBounds(f"{self.name}={v} outside [{self.low}, {self.high}]")
        return [(v - self.low) / (self.high - self.low)]

    def decode(self, u: Sequence[float]) -> int:
        t = min(max(float(u[0]), 0.0), 1.0)
        return int(round(self.low + t * (self.high - self.low)))

    def values(self) -> Iterator[int]:
        return iter(range(self.low, self.high + 1))

    def to_json(self) -> dict[str, Any]:
        return {"kind": "integer", "name": self.name, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class CategoricalDim:
    name: str
    choices: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.choices:
            raise ValueError(f"dim {self.name!r}: choices must be non-empty")
        if len(set(self.choices)) != len(self.choices):
            raise ValueError(f"dim {self.name!r}: duplicate choices")

    @property
    def width(self) -> int:
        return len(self.choices)

    def encode(self, v: Any) -> list[float]:
        if v not in self.choices:
            raise OutOfBounds(f"{self.name}={v!r} not in {list(self.choices)}")
        out = [0.0] * len(self.choices)
        out[self.choices.index(v)] = 1.0
        return out

    def decode(self, u: Sequence[float]) -> str:
        return self.choices[int(np.argmax(u))]

    def values(self) -> Iterator[str]:
        return iter(self.choices)

    def to_json(self) -> dict[str, Any]:
        return {"kind": "categorical", "name": self.name, "choices": list(self.choices)}


Dim = ContinuousDim | IntegerDim | CategoricalDim


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dim, ...]

    def __post_init__(self) -> None:
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dim names")

    @property
    def encoded_dim(self) -> int:
        return sum(d.width for d in self.dims)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    def encode(self, assignment: Mapping[str, Any]) -> np.ndarray:
        out: list[float] = []
        for dim in self.dims:
            if dim.name not in assignment:
                raise OutOfBounds(f"assignment missing dim {dim.name!r}")
            out.extend(dim.encode(assignment[dim.name]))
        return np.asarray(out, dtype=np.float64)

    def decode(self, vector: Sequence[float]) -> dict[str, Any]:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.encoded_dim,):
            raise ValueError(f"encoded vector must have length {self.encoded_dim}")
        out: dict[str, Any] = {}
        offset = 0
        for dim in self.dims:
            out[dim.name] = dim.decode(vec[offset : offset + dim.width])
            offset += dim.width
        return out

    @property
    def is_finite(self) -> bool:
        """True when every dim is discrete, so the space is an enumerable grid."""
        return all(isinstance(d, (IntegerDim, CategoricalDim)) for d in self.dims)

    def grid(self) -> Iterator[dict[str, Any]]:
        if not self.is_finite:
            raise ValueError("grid() requires a fully discrete space")
        pools = [list(d.values()) for d in self.dims]
        for combo in itertools.product(*pools):
            yield dict(zip(self.names, combo))

    def to_json(self) -> list[dict[str, Any]]:
        return [d.to_json() for d in self.dims]

    @classmethod
    def from_json(cls, obj: Sequence[Mapping[str, Any]]) -> SearchSpace:
        dims: list[Dim] = []
        for d in obj:
            kind = d["kind"]
            if kind == "continuous":
                dims.append(
                    ContinuousDim(name=d["name"], low=float(d["low"]), high=float(d["high"]), log=bool(d.get("log", False)))
                )
            elif kind == "integer":
                dims.append(IntegerDim(name=d["name"], low=int(d["low"]), high=int(d["high"])))
            elif kind == "categorical":
                dims.append(CategoricalDim(name=d["name"], choices=tuple(d["choices"])))
            else:
                raise ValueError(f"unknown dim kind {kind!r}")
        return cls(dims=tuple(dims))
