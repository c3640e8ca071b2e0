"""Dataset management: reproducible splits and the synthetic blob generator."""

from __future__ import annotations

import numpy as np

from ..store import ArtifactStore
from ..values import ArtifactRef, DatasetItem, DatasetManifest, SemanticType


class TooFewItems(ValueError):
    pass


def fisher_yates(n: int, rng: np.random.Generator) -> list[int]:
    """Seeded in-place shuffle of range(n); the split's source of randomness."""
    idx = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def dataset_split(
    manifest: DatasetManifest, ratio: float, seed: int
) -> tuple[DatasetManifest, DatasetManifest]:
    """Shuffle items with a seeded Fisher-Yates, first ceil(ratio*n) -> train.

    Disjoint and exhaustive; identical (manifest, ratio, seed) gives an
    identical split.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n = len(manifest.items)
    if n < 2:
        raise TooFewItems(f"need at least 2 items to split, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = fisher_yates(n, rng)
    n_train = int(np.ceil(ratio * n))
    train_items = tuple(manifest.items[i] for i in order[:n_train])
    test_items = tuple(manifest.items[i] for i in order[n_train:])
    return DatasetManifest(items=train_items), DatasetManifest(items=test_items)


BLOB_IMAGE_SIZE = 128
BLOB_COUNT_RANGE = (3, 8)
BLOB_SIGMA_RANGE = (4.0, 10.0)
BLOB_PEAK = 1.0
BLOB_BACKGROUND = 0.1
BLOB_NOISE_SIGMA = 0.05
# A blob's labeled support: pixels where its (peak-1) Gaussian is >= 0.5.
BLOB_SUPPORT_LEVEL = 0.5


def synthesize_blob_item(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One 128x128 image of Gaussian blobs on a noisy background, plus its mask."""
    size = BLOB_IMAGE_SIZE
    n_blobs = int(rng.integers(BLOB_COUNT_RANGE[0], BLOB_COUNT_RANGE[1] + 1))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    signal = np.zeros((size, size), dtype=np.float64)
    label = np.zeros((size, size), dtype=bool)
    for _ in range(n_blobs):
        cy = rng.uniform(10.0, size - 10.0)
        cx = rng.uniform(10.0, size - 10.0)
        sigma = rng.uniform(*BLOB_SIGMA_RANGE)
        bump = BLOB_PEAK * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
        signal = np.maximum(signal, bump)
        label |= bump >= BLOB_SUPPORT_LEVEL * BLOB_PEAK
    noise = rng.normal(0.0, BLOB_NOISE_SIGMA, size=(size, size))
    # Range contract [0, bg + peak + 5*sigma]: rare >5-sigma noise deviates
    # get clamped so the declared bound holds for every seed.
    hi = BLOB_BACKGROUND + BLOB_PEAK + 5.0 * BLOB_NOISE_SIGMA
    img = np.clip(BLOB_BACKGROUND + signal + noise, 0.0, hi).astype(np.float32)
    return img, label.astype(np.uint8)


def generate_synthetic_dataset(
    store: ArtifactStore, n_items: int, seed: int
) -> DatasetManifest:
    """Seeded stand-in dataset: items "item_000".. with image + label roles."""
    if n_items < 2:
        raise TooFewItems(f"need at least 2 items, got {n_items}")
    master = np.random.Generator(np.random.PCG64(seed))
    items = []
    for i in range(n_items):
        item_rng = np.random.Generator(np.random.PCG64(int(master.integers(0, 2**63))))
        img, label = synthesize_blob_item(item_rng)
        img_val = store.put_tensor(img, SemanticType.IMAGE)
        lab_val = store.put_tensor(label, SemanticType.MASK)
        items.append(
            DatasetItem(
                item_id=f"item_{i:03d}",
                roles={"image": img_val.ref, "label": lab_val.ref},
            )
        )
    return DatasetManifest(items=tuple(items))


def map_role(
    store: ArtifactStore,
    manifest: DatasetManifest,
    in_role: str,
    out_role: str,
    fn,
    out_kind: SemanticType,
) -> DatasetManifest:
    """Apply `fn` to one role of every item, writing results under `out_role`."""
    if manifest.items and in_role not in manifest.roles:
        raise KeyError(f"dataset has no role {in_role!r} (roles: {sorted(manifest.roles)})")
    items = []
    for item in manifest.items:
        arr = store.get_tensor(item.roles[in_role])
        out = fn(arr)
        ref: ArtifactRef = store.put_tensor(out, out_kind).ref
        roles = dict(item.roles)
        roles[out_role] = ref
        items.append(DatasetItem(item_id=item.item_id, roles=roles))
    return DatasetManifest(items=tuple(items))
