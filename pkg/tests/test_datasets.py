from __future__ import annotations

import numpy as np
import pytest

from medas.tools.datasets import (
    TooFewItems,
    dataset_split,
    generate_synthetic_dataset,
    synthesize_blob_item,
)
from medas.values import DatasetItem, DatasetManifest, ArtifactRef, Media


def fake_manifest(n: int) -> DatasetManifest:
    ref = ArtifactRef(hash="0" * 64, media=Media.CSV, size_bytes=0)
    return DatasetManifest(
        items=tuple(DatasetItem(item_id=f"i{k:02d}", roles={"image": ref}) for k in range(n))
    )


def test_split_cardinality_10_08():
    train, test = dataset_split(fake_manifest(10), 0.8, seed=42)
    assert len(train.items) == 8 and len(test.items) == 2
    ids = {i.item_id for i in train.items} | {i.item_id for i in test.items}
    assert len(ids) == 10  # disjoint union is everything


def test_split_deterministic():
    a = dataset_split(fake_manifest(10), 0.8, seed=42)
    b = dataset_split(fake_manifest(10), 0.8, seed=42)
    assert a == b
    c = dataset_split(fake_manifest(10), 0.8, seed=43)
    assert a != c


def test_split_two_items_half():
    train, test = dataset_split(fake_manifest(2), 0.5, seed=0)
    assert len(train.items) == 1 and len(test.items) == 1


def test_split_rejects_bad_inputs():
    with pytest.raises(TooFewItems):
        dataset_split(fake_manifest(1), 0.5, seed=0)
    with pytest.raises(ValueError):
        dataset_split(fake_manifest(4), 1.0, seed=0)


def test_generator_deterministic(store):
    a = generate_synthetic_dataset(store, 20, seed=7)
    b = generate_synthetic_dataset(store, 20, seed=7)
    assert a == b
    c = generate_synthetic_dataset(store, 20, seed=8)
    assert a != c


def test_generator_labels_nonempty(store):
    manifest = generate_synthetic_dataset(store, 6, seed=3)
    for item in manifest.items:
        label = store.get_tensor(item.roles["label"])
        assert label.sum() > 0  # at least 3 blobs guaranteed


def test_generator_image_range_bound():
    # background 0.1 + peak 1.0 + 5 sigma of noise(0.05) = 1.35
    rng = np.random.default_rng(0)
    lo, hi = np.inf, -np.inf
    for _ in range(1000):
        img, _ = synthesize_blob_item(rng)
        lo = min(lo, float(img.min()))
        hi = max(hi, float(img.max()))
    assert hi <= 1.35
    assert lo >= 0.0


def test_generator_shapes_and_dtypes():
    img, lab = synthesize_blob_item(np.random.default_rng(1))
    assert img.shape == (128, 128) and img.dtype == np.float32
    assert lab.shape == (128, 128) and lab.dtype == np.uint8
    assert set(np.unique(lab)) <= {0, 1}
