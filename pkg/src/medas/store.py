"""Content-addressed artifact store: append-only files keyed by SHA-256.

Layout on disk is `<root>/objects/<first two hex chars>/<hash>`. Writers land
on a temp file and atomic-rename, so concurrent puts of identical bytes from
any number of workers converge on one stored object.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path

import numpy as np

from .tensorio import decode_tensor, encode_tensor, validate_tensor_bytes
from .values import (
    ArtifactRef,
    ArtifactVal,
    DatasetManifest,
    Media,
    SemanticType,
    canonical_json_bytes,
)


class StoreError(Exception):
    pass


class NotFound(StoreError):
    """No object stored under the requested hash."""


class CorruptionDetected(StoreError):
    """Stored bytes no longer hash to their address; storage fault."""


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ArtifactStore:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        (self.root / "objects").mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.root / "objects" / digest[:2] / digest

    def put(self, data: bytes, media: Media) -> ArtifactRef:
        """Persist bytes under their digest; idempotent for identical content."""
        if media is Media.MD_TENSOR:
            validate_tensor_bytes(data)
        digest = sha256_hex(data)
        path = self._path(digest)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".put-")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
        return ArtifactRef(hash=digest, media=media, size_bytes=len(data))

    def get(self, ref: ArtifactRef | str) -> bytes:
        digest = ref.hash if isinstance(ref, ArtifactRef) else ref
        path = self._path(digest)
        if not path.exists():
            raise NotFound(digest)
        data = path.read_bytes()
        if sha256_hex(data) != digest:
            raise CorruptionDetected(digest)
        return data

    def exists(self, digest: str) -> bool:
        return self._path(digest).exists()

    # Typed helpers -------------------------------------------------------

    def put_tensor(self, arr: np.ndarray, kind: SemanticType = SemanticType.TENSOR) -> ArtifactVal:
        ref = self.put(encode_tensor(arr), Media.MD_TENSOR)
        return ArtifactVal(ref=ref, kind=kind)

    def get_tensor(self, ref: ArtifactRef | str) -> np.ndarray:
        return decode_tensor(self.get(ref))

    def put_manifest(self, manifest: DatasetManifest) -> ArtifactRef:
        return self.put(canonical_json_bytes(manifest.to_json()), Media.JSON)

    def get_manifest(self, ref: ArtifactRef | str) -> DatasetManifest:
        import json

        return DatasetManifest.from_json(json.loads(self.get(ref).decode("utf-8")))


def check_artifact_semantics(store: ArtifactStore, value: ArtifactVal) -> np.ndarray | None:
    """Verify the declared semantic tag against the stored content on bind.

    Returns the decoded tensor when the artifact is an MDTensor, else None.
    Raises CoercionError-style ValueError on mismatch.
    """
    kind = value.kind
    if value.ref.media is not Media.MD_TENSOR:
        return None
    arr = store.get_tensor(value.ref)
    if kind is SemanticType.IMAGE:
        if arr.ndim not in (2, 3) or arr.dtype.kind not in "fui":
            raise ValueError(f"artifact bound as Image has ndim={arr.ndim}, dtype={arr.dtype}")
    elif kind is SemanticType.MASK:
        uniq = np.unique(arr)
        if not np.all(np.isin(uniq, (0, 1))):
            raise ValueError("artifact bound as Mask holds values outside {0,1}")
    elif kind is SemanticType.LABEL_MAP:
        if arr.dtype.kind not in "ui" or (arr.size and arr.min() < 0):
            raise ValueError("artifact bound as LabelMap must hold non-negative integers")
    return arr
