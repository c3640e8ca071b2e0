"""Probability-map post-processing."""

from __future__ import annotations

import numpy as np

from .common import otsu_threshold, remove_small_components

DEFAULT_MIN_AREA = 4


def binary_normalize(
    prob: np.ndarray,
    strategy: str = "fixed",
    threshold: float = 0.5,
    min_area: int = DEFAULT_MIN_AREA,
) -> np.ndarray:
    """Turn a probability map in [0, 1] into a cleaned binary mask.

    strategy "fixed": mask = prob >= threshold; "otsu": threshold from a
    256-bin histogram of the map. Components smaller than `min_area` pixels
    are removed afterwards.
    """
    arr = np.asarray(prob, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("probability map must lie in [0, 1]")
    if strategy == "fixed":
        mask = arr >= threshold
    elif strategy == "otsu":
        if float(arr.min()) == float(arr.max()):
            mask = np.zeros_like(arr, dtype=bool)
        else:
            mask = arr > otsu_threshold(arr, bins=256)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return remove_small_components(mask.astype(np.uint8), min_area)
