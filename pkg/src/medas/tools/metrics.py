"""Segmentation metrics: Dice overlap and the aggregated Jaccard index."""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    pass


def dice_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|P & G| / (|P| + |G|) on binary masks; two empty masks score 1.0."""
    p = np.asarray(pred) != 0
    g = np.asarray(gt) != 0
    if p.shape != g.shape:
        raise ShapeMismatch(f"pred shape {p.shape} != gt shape {g.shape}")
    p_sum = int(p.sum())
    g_sum = int(g.sum())
    if p_sum + g_sum == 0:
        return 1.0
    inter = int(np.logical_and(p, g).sum())
    return 2.0 * inter / (p_sum + g_sum)


def aji_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """Aggregated Jaccard index between two instance label maps (0 = background).

    Ground-truth driven: each GT instance (in increasing label order) greedily
    claims the unused predicted instance with the highest Jaccard overlap,
    adding the pair's intersection to C and union to U. A GT instance with no
    overlapping unused prediction adds |G| to U; every prediction left unused
    at the end adds |P| to U. AJI = C / U. Matching is GT-driven, so the
    metric is not symmetric. Two all-background maps score 1.0.
    """
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise ShapeMismatch(f"pred shape {p.shape} != gt shape {g.shape}")

    g_labels = [int(v) for v in np.unique(g) if v != 0]
    p_labels = [int(v) for v in np.unique(p) if v != 0]
    if not g_labels and not p_labels:
        return 1.0

    p_sizes = {lab: int((p == lab).sum()) for lab in p_labels}
    g_flat = g.ravel()
    p_flat = p.ravel()
    # Overlap counts between every (gt, pred) instance pair that intersects.
    overlaps: dict[int, dict[int, int]] = {lab: {} for lab in g_labels}
    both = (g_flat != 0) & (p_flat != 0)
    if both.any():
        pairs, counts = np.unique(
            np.stack([g_flat[both], p_flat[both]], axis=0), axis=1, return_counts=True
        )
        for (gl, pl), cnt in zip(pairs.T, counts):
            overlaps[int(gl)][int(pl)] = int(cnt)

    used: set[int] = set()
    c_total = 0
    u_total = 0
    for gl in sorted(g_labels):
        g_size = int((g == gl).sum())
        best_p = None
        best_j = 0.0
        for pl in sorted(overlaps[gl]):
            if pl in used:
                continue
            inter = overlaps[gl][pl]
            union = g_size + p_sizes[pl] - inter
            j = inter / union
            if j > best_j:
                best_j = j
                best_p = pl
        if best_p is None:
            u_total += g_size
        else:
            used.add(best_p)
            inter = overlaps[gl][best_p]
            c_total += inter
            u_total += g_size + p_sizes[best_p] - inter
    for pl in p_labels:
        if pl not in used:
            u_total += p_sizes[pl]
    if u_total == 0:
        return 1.0
    return c_total / u_total
