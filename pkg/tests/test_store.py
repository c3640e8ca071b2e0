from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from medas.store import ArtifactStore, CorruptionDetected, NotFound
from medas.tensorio import HeaderInvalid, encode_tensor
from medas.values import DatasetError, DatasetItem, DatasetManifest, Media


def test_put_same_bytes_same_ref(store):
    a = store.put(b"hello", Media.CSV)
    b = store.put(b"hello", Media.CSV)
    assert a.hash == b.hash
    objects = list((store.root / "objects").rglob("*"))
    assert len([p for p in objects if p.is_file()]) == 1


def test_put_get_roundtrip(store):
    payload = b"col\n1\n2\n"
    ref = store.put(payload, Media.CSV)
    assert store.get(ref) == payload


def test_empty_csv_is_valid(store):
    ref = store.put(b"", Media.CSV)
    assert ref.size_bytes == 0
    assert store.get(ref) == b""


def test_mdtensor_header_validated_on_put(store):
    good = encode_tensor(np.zeros((2, 2), dtype=np.float32))
    bad = good[:-4]  # 12-byte payload for 2x2 f32
    with pytest.raises(HeaderInvalid):
        store.put(bad, Media.MD_TENSOR)


def test_unknown_hash_not_found(store):
    with pytest.raises(NotFound):
        store.get("0" * 64)


def test_tampered_file_detected(store):
    ref = store.put(b"payload", Media.CSV)
    path = store.root / "objects" / ref.hash[:2] / ref.hash
    path.write_bytes(b"tampered")
    with pytest.raises(CorruptionDetected):
        store.get(ref)


def test_concurrent_identical_puts_one_object(store):
    payload = b"x" * 4096
    with ThreadPoolExecutor(max_workers=8) as pool:
        refs = list(pool.map(lambda _: store.put(payload, Media.CSV), range(32)))
    assert len({r.hash for r in refs}) == 1
    files = [p for p in (store.root / "objects").rglob("*") if p.is_file()]
    assert len(files) == 1


def test_tensor_roundtrip_helpers(store):
    arr = np.arange(12, dtype=np.int64).reshape(3, 4)
    val = store.put_tensor(arr)
    assert np.array_equal(store.get_tensor(val.ref), arr)


def test_manifest_roundtrip(store):
    ref = store.put(b"data", Media.CSV)
    manifest = DatasetManifest(
        items=(
            DatasetItem(item_id="a", roles={"image": ref}),
            DatasetItem(item_id="b", roles={"image": ref}),
        )
    )
    stored = store.put_manifest(manifest)
    assert store.get_manifest(stored) == manifest


def test_manifest_duplicate_ids_rejected(store):
    ref = store.put(b"data", Media.CSV)
    with pytest.raises(DatasetError):
        DatasetManifest(
            items=(
                DatasetItem(item_id="a", roles={"image": ref}),
                DatasetItem(item_id="a", roles={"image": ref}),
            )
        )


def test_manifest_ragged_roles_rejected(store):
    ref = store.put(b"data", Media.CSV)
    with pytest.raises(DatasetError):
        DatasetManifest(
            items=(
                DatasetItem(item_id="a", roles={"image": ref}),
                DatasetItem(item_id="b", roles={"image": ref, "label": ref}),
            )
        )
