"""Shared image primitives used across the tool library."""

from __future__ import annotations

import numpy as np


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Threshold maximizing between-class variance over a histogram.

    Histogram spans min..max of the data with `bins` bins; the returned
    threshold is the upper edge of the chosen split bin, so "foreground" is
    strictly above it. The variance is computed on integer bin indices
    (affine-equivalent to bin centers), so the split is exact and the
    first-maximum tie rule is deterministic across implementations.
    Degenerate (single-valued) input returns that value.
    """
    flat = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(flat.min()), float(flat.max())
    if lo == hi:
        return lo
    hist, edges = np.histogram(flat, bins=bins, range=(lo, hi))
    counts = hist.astype(np.float64)  # exact: counts are small integers
    idx = np.arange(bins, dtype=np.float64)
    total = counts.sum()
    w0 = np.cumsum(counts)
    w1 = total - w0
    s0 = np.cumsum(counts * idx)
    s1 = s0[-1] - s0
    # w0*w1*(mu0-mu1)^2 rewritten over exact integer sums: (s0*w1 - s1*w0)^2 / (w0*w1)
    num = (s0 * w1 - s1 * w0) ** 2
    den = w0 * w1
    with np.errstate(divide="ignore", invalid="ignore"):
        between = num / den
    between[den == 0] = -1.0
    k = int(np.argmax(between))
    return float(edges[k + 1])


def label_components(mask: np.ndarray, connectivity: int = 4) -> np.ndarray:
    """Label connected components of a binary mask.

    Returns an int64 map with background 0 and components 1..n, numbered in
    row-major scan order of their first pixel (deterministic).
    2D only; connectivity 4 or 8.
    """
    mask = np.asarray(mask) != 0
    if mask.ndim != 2:
        raise ValueError(f"label_components expects 2D mask, got ndim={mask.ndim}")
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int64)
    if connectivity == 4:
        offsets = ((-1, 0), (1, 0), (0, -1), (0, 1))
    elif connectivity == 8:
        offsets = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
    else:
        raise ValueError("connectivity must be 4 or 8")
    current = 0
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or labels[r, c]:
                continue
            current += 1
            stack = [(r, c)]
            labels[r, c] = current
            while stack:
                y, x = stack.pop()
                for dy, dx in offsets:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not labels[ny, nx]:
                        labels[ny, nx] = current
                        stack.append((ny, nx))
    return labels


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep only the largest 4-connected component (ties: lowest label)."""
    labels = label_components(mask, connectivity=4)
    n = labels.max()
    if n == 0:
        return np.zeros_like(labels, dtype=np.uint8)
    sizes = np.bincount(labels.ravel())[1:]
    keep = int(np.argmax(sizes)) + 1
    return (labels == keep).astype(np.uint8)


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Fill regions of background fully enclosed by the mask (4-connected)."""
    mask = np.asarray(mask) != 0
    bg_labels = label_components(~mask, connectivity=4)
    border = np.concatenate(
        [bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]]
    )
    outside = set(int(v) for v in np.unique(border) if v != 0)
    holes = (bg_labels != 0) & ~np.isin(bg_labels, sorted(outside))
    return (mask | holes).astype(np.uint8)


def remove_small_components(mask: np.ndarray, min_area: int) -> np.ndarray:
    """Drop 4-connected components smaller than `min_area` pixels."""
    if min_area <= 1:
        return (np.asarray(mask) != 0).astype(np.uint8)
    labels = label_components(mask, connectivity=4)
    n = labels.max()
    if n == 0:
        return np.zeros_like(labels, dtype=np.uint8)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_area
    keep[0] = False
    return keep[labels].astype(np.uint8)


def box_blur(img: np.ndarray, k: int) -> np.ndarray:
    """k x k mean filter with replicated edges, 2D float64 output."""
    if k % 2 != 1 or k < 1:
        raise ValueError("box_blur kernel size must be odd and positive")
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("box_blur expects a 2D image")
    pad = k // 2
    padded = np.pad(arr, pad, mode="edge")
    # Integral-image sum over k x k windows.
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.float64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    h, w = arr.shape
    total = (
        integral[k : k + h, k : k + w]
        - integral[0:h, k : k + w]
        - integral[k : k + h, 0:w]
        + integral[0:h, 0:w]
    )
    return total / (k * k)


def gradient_magnitude(img: np.ndarray) -> np.ndarray:
    """Per-pixel gradient magnitude from central differences."""
    arr = np.asarray(img, dtype=np.float64)
    gy, gx = np.gradient(arr)
    return np.sqrt(gy * gy + gx * gx)
