from __future__ import annotations

import numpy as np
import pytest

from medas.tools.common import label_components, otsu_threshold
from medas.tools.preprocess import (
    NonPositiveFactor,
    NonPositiveWidth,
    foreground_mask,
    resample,
    window_level_rescale,
    zscore_normalize,
)


def test_window_level_spec_points():
    img = np.array([-200.0, 0.0, 1000.0])
    out = window_level_rescale(img, width=400.0, level=0.0)
    assert out.dtype == np.float32
    assert np.allclose(out, [0.0, 0.5, 1.0])


def test_window_level_requires_positive_width():
    with pytest.raises(NonPositiveWidth):
        window_level_rescale(np.zeros((2, 2)), width=0.0, level=0.0)


def test_zscore_two_values():
    assert np.allclose(zscore_normalize(np.array([1.0, 3.0])), [-1.0, 1.0])


def test_zscore_constant_guard():
    assert np.array_equal(zscore_normalize(np.full((3,), 5.0)), np.zeros(3))


def test_zscore_postcondition_random():
    rng = np.random.default_rng(0)
    img = rng.random((37, 23)) * 100 + 7
    out = zscore_normalize(img)
    assert abs(out.mean()) < 1e-9
    assert abs(out.std() - 1.0) < 1e-9


def test_resample_nearest_replicates_2x():
    img = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = resample(img, 2.0, "nearest")
    expect = np.repeat(np.repeat(img, 2, axis=0), 2, axis=1)
    assert np.array_equal(out, expect)


def test_resample_factor_one_identity_both_modes():
    rng = np.random.default_rng(1)
    img = rng.random((5, 7)).astype(np.float32)
    for mode in ("nearest", "linear"):
        out = resample(img, 1.0, mode)
        assert out.dtype == img.dtype
        assert np.array_equal(out, img)


def test_resample_linear_1d_hand_computed():
    # Sampling at source coords 0.25, 0.75, 1.25, 1.75 with edge clamping:
    # first/last clamp to endpoints, middle two interpolate 0..10.
    out = resample(np.array([0.0, 10.0]), 2.0, "linear")
    assert np.allclose(out, [0.0, 2.5, 7.5, 10.0])


def test_resample_rejects_nonpositive_factor():
    with pytest.raises(NonPositiveFactor):
        resample(np.zeros((2, 2)), 0.0, "nearest")


def test_resample_output_dims_round_min_one():
    out = resample(np.zeros((3, 3)), 0.1, "nearest")
    assert out.shape == (1, 1)


def brute_force_otsu(values: np.ndarray) -> float:
    """Independent oracle: exhaustive threshold search maximizing
    between-class variance, pure-Python integer sums over the 256-bin grid."""
    flat = values.ravel().astype(np.float64)
    lo, hi = flat.min(), flat.max()
    hist, edges = np.histogram(flat, bins=256, range=(lo, hi))
    counts = [int(c) for c in hist]
    total = sum(counts)
    s_all = sum(i * c for i, c in enumerate(counts))
    best_k, best_v = 0, -1.0
    w0 = 0
    s0 = 0
    for k in range(256):
        w0 += counts[k]
        s0 += k * counts[k]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        v = float(s0 * w1 - (s_all - s0) * w0) ** 2 / float(w0 * w1)
        if v > best_v:
            best_v, best_k = v, k
    return float(edges[best_k + 1])


def test_otsu_matches_bruteforce_on_random_images():
    rng = np.random.default_rng(5)
    for _ in range(25):
        img = np.concatenate(
            [rng.normal(0.2, 0.05, 300), rng.normal(0.8, 0.08, 200)]
        )
        assert otsu_threshold(img) == pytest.approx(brute_force_otsu(img))


def test_foreground_mask_bimodal():
    rng = np.random.default_rng(2)
    img = np.full((10, 10), 10.0)
    img[4:9, 3:9] = 200.0  # 30 px bright region
    mask = foreground_mask(img)
    assert np.array_equal(mask.astype(bool), img > otsu_threshold(img))


def test_foreground_mask_degenerate_empty():
    assert foreground_mask(np.full((8, 8), 3.0)).sum() == 0


def test_foreground_mask_keeps_largest_blob_only():
    img = np.zeros((20, 20))
    img[2:8, 2:7] = 1.0  # 30 px
    img[12:14, 12:17] = 1.0  # 10 px
    mask = foreground_mask(img)
    assert mask[3, 3] == 1
    assert mask[12, 13] == 0
    assert mask.sum() == 30


def test_foreground_mask_fills_holes():
    img = np.zeros((12, 12))
    img[2:10, 2:10] = 1.0
    img[5:7, 5:7] = 0.0  # enclosed hole
    mask = foreground_mask(img)
    assert mask[5, 5] == 1
    assert mask.sum() == 64


def test_label_components_connectivity():
    mask = np.array(
        [
            [1, 0, 1],
            [0, 0, 1],
            [1, 1, 0],
        ]
    )
    labels = label_components(mask, connectivity=4)
    assert labels.max() == 3
    # diagonal pixels are separate under 4-connectivity
    assert labels[0, 0] != labels[2, 0]
