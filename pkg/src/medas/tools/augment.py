"""Augmentation kernels: all deterministic given (input, params, seed)."""

from __future__ import annotations

import numpy as np


class CropOutOfBounds(ValueError):
    pass


def mirror(img: np.ndarray, axis: int = 0) -> np.ndarray:
    return np.flip(np.asarray(img), axis=axis).copy()


def rot90(img: np.ndarray, k: int = 1) -> np.ndarray:
    """Rotate by k quarter turns in the leading two axes."""
    return np.rot90(np.asarray(img), k=k, axes=(0, 1)).copy()


def crop(img: np.ndarray, origin: tuple[int, ...], size: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(img)
    if len(origin) != arr.ndim or len(size) != arr.ndim:
        raise CropOutOfBounds(f"origin/size rank must match image ndim={arr.ndim}")
    slices = []
    for o, s, dim in zip(origin, size, arr.shape):
        if o < 0 or s < 1 or o + s > dim:
            raise CropOutOfBounds(f"window [{o}, {o + s}) outside axis of length {dim}")
        slices.append(slice(o, o + s))
    return arr[tuple(slices)].copy()


def random_crop(img: np.ndarray, size: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Crop a window of `size` at an origin drawn uniformly from the valid range."""
    arr = np.asarray(img)
    if len(size) != arr.ndim:
        raise CropOutOfBounds(f"size rank must match image ndim={arr.ndim}")
    origin = []
    for s, dim in zip(size, arr.shape):
        if s < 1 or s > dim:
            raise CropOutOfBounds(f"window size {s} outside axis of length {dim}")
        origin.append(int(rng.integers(0, dim - s + 1)))
    return crop(arr, tuple(origin), tuple(size))


def gaussian_noise(img: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add iid N(0, sigma^2), then clamp back to the input's observed range.

    sigma = 0 is the exact identity.
    """
    arr = np.asarray(img)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return arr.copy()
    lo, hi = float(arr.min()), float(arr.max())
    noisy = arr.astype(np.float64) + rng.normal(0.0, sigma, size=arr.shape)
    out = np.clip(noisy, lo, hi)
    if arr.dtype.kind in "ui":
        return np.rint(out).astype(arr.dtype)
    return out.astype(arr.dtype)
