"""Semantic type tags, the runtime value model, and the coercion lattice."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence


class SemanticType(str, Enum):
    """Closed set of port/value type tags.

    Image, Mask, and LabelMap are tensor refinements: Image is 2D/3D numeric,
    Mask holds values in {0, 1}, LabelMap holds non-negative integers.
    """

    INT = "Int"
    FLOAT = "Float"
    BOOL = "Bool"
    TEXT = "Text"
    TENSOR = "Tensor"
    IMAGE = "Image"
    MASK = "Mask"
    LABEL_MAP = "LabelMap"
    DATASET = "Dataset"
    TABLE = "Table"
    MODEL_BLOB = "ModelBlob"


class Media(str, Enum):
    """On-disk container format of a stored artifact."""

    MD_TENSOR = "MDTensor"
    PNG = "PNG"
    CSV = "CSV"
    JSON = "JSON"


SCALAR_TYPES = frozenset(
    {SemanticType.INT, SemanticType.FLOAT, SemanticType.BOOL, SemanticType.TEXT}
)

# Directed coercion pairs beyond identity. Deliberately minimal: text parses
# strictly, Int widens to Float, Mask widens to Image. No Float->Int, no
# implicit reshapes.
COERCIONS: frozenset[tuple[SemanticType, SemanticType]] = frozenset(
    {
        (SemanticType.TEXT, SemanticType.INT),
        (SemanticType.TEXT, SemanticType.FLOAT),
        (SemanticType.TEXT, SemanticType.BOOL),
        (SemanticType.INT, SemanticType.FLOAT),
        (SemanticType.MASK, SemanticType.IMAGE),
    }
)


def compatible(src: SemanticType, dst: SemanticType) -> bool:
    """True if a value of type `src` may flow into a port of type `dst`."""
    return src == dst or (src, dst) in COERCIONS


class CoercionError(ValueError):
    """A value cannot be converted to the requested semantic type.

    Signals a graph wiring bug, not a data fault.
    """


@dataclass(frozen=True)
class ArtifactRef:
    """Content address of a stored file: SHA-256 hex digest plus container info."""

    hash: str
    media: Media
    size_bytes: int

    def to_json(self) -> dict[str, Any]:
        return {"hash": self.hash, "media": self.media.value, "size_bytes": self.size_bytes}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> ArtifactRef:
        return cls(hash=obj["hash"], media=Media(obj["media"]), size_bytes=int(obj["size_bytes"]))


@dataclass(frozen=True)
class DatasetItem:
    """One dataset entry: an id plus a role->artifact mapping (e.g. image, label)."""

    item_id: str
    roles: Mapping[str, ArtifactRef]

    def to_json(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "roles": {r: ref.to_json() for r, ref in sorted(self.roles.items())},
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> DatasetItem:
        return cls(
            item_id=obj["item_id"],
            roles={r: ArtifactRef.from_json(v) for r, v in obj["roles"].items()},
        )


class DatasetError(ValueError):
    """Manifest violates dataset invariants (duplicate ids, ragged roles)."""


@dataclass(frozen=True)
class DatasetManifest:
    """An ordered collection of items, each exposing the same set of roles."""

    items: tuple[DatasetItem, ...]

    def __post_init__(self) -> None:
        ids = [it.item_id for it in self.items]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate item_id in dataset manifest")
        if self.items:
            roles = set(self.items[0].roles)
            for it in self.items[1:]:
                if set(it.roles) != roles:
                    raise DatasetError(
                        f"item {it.item_id!r} roles {sorted(it.roles)} != {sorted(roles)}"
                    )

    @property
    def roles(self) -> frozenset[str]:
        return frozenset(self.items[0].roles) if self.items else frozenset()

    def to_json(self) -> dict[str, Any]:
        return {"items": [it.to_json() for it in self.items]}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> DatasetManifest:
        return cls(items=tuple(DatasetItem.from_json(it) for it in obj["items"]))


@dataclass(frozen=True)
class Value:
    """Base of the tagged runtime datum flowing over pipeline edges.

    Values are immutable once produced.
    """

    def semantic(self) -> SemanticType:
        raise NotImplementedError


@dataclass(frozen=True)
class IntVal(Value):
    v: int

    def semantic(self) -> SemanticType:
        return SemanticType.INT


@dataclass(frozen=True)
class FloatVal(Value):
    v: float

    def semantic(self) -> SemanticType:
        return SemanticType.FLOAT


@dataclass(frozen=True)
class BoolVal(Value):
    v: bool

    def semantic(self) -> SemanticType:
        return SemanticType.BOOL


@dataclass(frozen=True)
class TextVal(Value):
    v: str

    def semantic(self) -> SemanticType:
        return SemanticType.TEXT


@dataclass(frozen=True)
class ArtifactVal(Value):
    ref: ArtifactRef
    kind: SemanticType

    def semantic(self) -> SemanticType:
        return self.kind


@dataclass(frozen=True)
class TableVal(Value):
    """Rows of named scalars; materializes as a CSV artifact."""

    rows: tuple[Mapping[str, Any], ...]

    def semantic(self) -> SemanticType:
        return SemanticType.TABLE


@dataclass(frozen=True)
class DatasetVal(Value):
    manifest: DatasetManifest

    def semantic(self) -> SemanticType:
        return SemanticType.DATASET


_TRUE_WORDS = {"true", "1", "yes", "on"}
_FALSE_WORDS = {"false", "0", "no", "off"}


def coerce(value: Value, target: SemanticType) -> Value:
    """Convert `value` to `target` along the coercion lattice.

    Text parses strictly (Int/Float/Bool), Int widens to Float exactly, Mask
    widens to Image; any other non-identity conversion raises CoercionError.
    Idempotent: coercing an already-converted value is the identity.
    """
    if value.semantic() == target:
        return value
    if isinstance(value, TextVal):
        text = value.v.strip()
        if target is SemanticType.INT:
            try:
                return IntVal(int(text, 10))
            except ValueError:
                raise CoercionError(f"cannot parse {value.v!r} as Int") from None
        if target is SemanticType.FLOAT:
            try:
                f = float(text)
            except ValueError:
                raise CoercionError(f"cannot parse {value.v!r} as Float") from None
            if f != f or f in (float("inf"), float("-inf")):
                raise CoercionError(f"non-finite Float parse of {value.v!r}")
            return FloatVal(f)
        if target is SemanticType.BOOL:
            low = text.lower()
            if low in _TRUE_WORDS:
                return BoolVal(True)
            if low in _FALSE_WORDS:
                return BoolVal(False)
            raise CoercionError(f"cannot parse {value.v!r} as Bool")
    if isinstance(value, IntVal) and target is SemanticType.FLOAT:
        return FloatVal(float(value.v))
    if (
        isinstance(value, ArtifactVal)
        and value.kind is SemanticType.MASK
        and target is SemanticType.IMAGE
    ):
        return ArtifactVal(ref=value.ref, kind=SemanticType.IMAGE)
    raise CoercionError(f"no coercion from {value.semantic().value} to {target.value}")


def value_to_json(value: Value) -> dict[str, Any]:
    """Stable JSON encoding used by run records, caches, and the HTTP API."""
    if isinstance(value, IntVal):
        return {"t": "int", "v": value.v}
    if isinstance(value, FloatVal):
        return {"t": "float", "v": value.v}
    if isinstance(value, BoolVal):
        return {"t": "bool", "v": value.v}
    if isinstance(value, TextVal):
        return {"t": "text", "v": value.v}
    if isinstance(value, ArtifactVal):
        return {"t": "artifact", "ref": value.ref.to_json(), "kind": value.kind.value}
    if isinstance(value, TableVal):
        return {"t": "table", "rows": [dict(sorted(r.items())) for r in value.rows]}
    if isinstance(value, DatasetVal):
        return {"t": "dataset", "manifest": value.manifest.to_json()}
    raise TypeError(f"unencodable value {value!r}")


def value_from_json(obj: Mapping[str, Any]) -> Value:
    tag = obj["t"]
    if tag == "int":
        return IntVal(int(obj["v"]))
    if tag == "float":
        return FloatVal(float(obj["v"]))
    if tag == "bool":
        return BoolVal(bool(obj["v"]))
    if tag == "text":
        return TextVal(str(obj["v"]))
    if tag == "artifact":
        return ArtifactVal(ref=ArtifactRef.from_json(obj["ref"]), kind=SemanticType(obj["kind"]))
    if tag == "table":
        return TableVal(rows=tuple(obj["rows"]))
    if tag == "dataset":
        return DatasetVal(manifest=DatasetManifest.from_json(obj["manifest"]))
    raise ValueError(f"unknown value tag {tag!r}")


def canonical_json_bytes(obj: Any) -> bytes:
    """Canonical encoding: UTF-8, sorted keys, no insignificant whitespace.

    The byte-exact substrate for content hashes; NaN/Infinity are rejected.
    """
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def python_to_value(raw: Any) -> Value:
    """Lift a plain JSON scalar into a Value (for literal params)."""
    if isinstance(raw, bool):
        return BoolVal(raw)
    if isinstance(raw, int):
        return IntVal(raw)
    if isinstance(raw, float):
        return FloatVal(raw)
    if isinstance(raw, str):
        return TextVal(raw)
    raise TypeError(f"literal param must be a JSON scalar, got {type(raw).__name__}")
