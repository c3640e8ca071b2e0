"""Intensity and geometry preprocessing kernels."""

from __future__ import annotations

import numpy as np

from .common import fill_holes, largest_component, otsu_threshold


class NonPositiveWidth(ValueError):
    pass


class NonPositiveFactor(ValueError):
    pass


def window_level_rescale(img: np.ndarray, width: float, level: float) -> np.ndarray:
    """Clamp intensities to [level - width/2, level + width/2], scale to [0, 1].

    out = clamp((v - (level - width/2)) / width, 0, 1), float32.
    """
    if width <= 0:
        raise NonPositiveWidth(f"window width must be positive, got {width}")
    arr = np.asarray(img, dtype=np.float64)
    out = (arr - (level - width / 2.0)) / width
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def zscore_normalize(img: np.ndarray) -> np.ndarray:
    """Shift/scale to zero mean, unit population std; constant input maps to zeros."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot normalize an empty image")
    mu = arr.mean()
    sigma = arr.std()
    if sigma == 0.0:
        return np.zeros_like(arr)
    return (arr - mu) / sigma


def _axis_coords(n_out: int, factor: float) -> np.ndarray:
    # Output pixel centers mapped back to source coordinates.
    return (np.arange(n_out) + 0.5) / factor - 0.5


def _resample_axis(arr: np.ndarray, axis: int, factor: float, mode: str) -> np.ndarray:
    n = arr.shape[axis]
    n_out = max(1, int(round(n * factor)))
    coords = _axis_coords(n_out, factor)
    if mode == "nearest":
        idx = np.clip(np.floor(coords + 0.5).astype(np.int64), 0, n - 1)
        return np.take(arr, idx, axis=axis)
    if mode == "linear":
        s = np.clip(coords, 0.0, n - 1.0)
        i0 = np.floor(s).astype(np.int64)
        i1 = np.minimum(i0 + 1, n - 1)
        w = s - i0
        lo = np.take(arr, i0, axis=axis).astype(np.float64)
        hi = np.take(arr, i1, axis=axis).astype(np.float64)
        shape = [1] * arr.ndim
        shape[axis] = n_out
        w = w.reshape(shape)
        return lo * (1.0 - w) + hi * w
    raise ValueError(f"unknown resample mode {mode!r}")


def resample(img: np.ndarray, factors: float | list[float], mode: str = "linear") -> np.ndarray:
    """Separable per-axis resampling with edge clamping.

    Output size per axis is round(dim * factor), at least 1. Nearest picks
    in[round((i+0.5)/f - 0.5)] with half-up rounding; linear interpolates the
    same coordinates between clamped neighbors. Integer inputs round back to
    the source dtype; factor 1 is the exact identity in both modes.
    """
    arr = np.asarray(img)
    if np.isscalar(factors):
        factor_list = [float(factors)] * arr.ndim
    else:
        factor_list = [float(f) for f in factors]
        if len(factor_list) != arr.ndim:
            raise ValueError(f"{len(factor_list)} factors for ndim={arr.ndim}")
    if any(f <= 0 for f in factor_list):
        raise NonPositiveFactor(f"factors must be positive, got {factor_list}")
    out = arr
    for axis, f in enumerate(factor_list):
        out = _resample_axis(out, axis, f, mode)
    if mode == "linear" and arr.dtype.kind in "ui":
        out = np.rint(out).astype(arr.dtype)
    elif mode == "linear":
        out = out.astype(arr.dtype)
    return out


def foreground_mask(img: np.ndarray) -> np.ndarray:
    """Segment the dominant bright structure of a grayscale image.

    Otsu threshold over a 256-bin histogram (min..max), keep the largest
    4-connected above-threshold component, fill enclosed holes. A degenerate
    single-valued image yields an empty mask; callers log the warning.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"foreground_mask expects a 2D image, got ndim={arr.ndim}")
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        return np.zeros(arr.shape, dtype=np.uint8)
    t = otsu_threshold(arr, bins=256)
    above = arr > t
    if not above.any():
        return np.zeros(arr.shape, dtype=np.uint8)
    return fill_holes(largest_component(above))
