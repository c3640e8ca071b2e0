"""Rendering and model-inspection tools: overlays, loss curves, occlusion maps."""

from __future__ import annotations

import io
from typing import Sequence

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw

from .classifier import PixelClassifier, predict_pixel_classifier
from .metrics import dice_score

OVERLAY_ALPHA = 0.5
OVERLAY_COLOR = (255, 0, 0)  # #FF0000


class BlockLargerThanImage(ValueError):
    pass


def _to_u8_gray(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        arr = (arr - lo) / (hi - lo)
    else:
        arr = np.zeros_like(arr)
    return np.rint(arr * 255.0).astype(np.uint8)


def _png_bytes(img: PILImage.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def overlay_png(img: np.ndarray, mask: np.ndarray) -> bytes:
    """Mask alpha-blended at 0.5 over the grayscale image, mask color #FF0000."""
    gray = _to_u8_gray(img)
    m = np.asarray(mask) != 0
    if gray.shape != m.shape:
        raise ValueError(f"image shape {gray.shape} != mask shape {m.shape}")
    rgb = np.stack([gray, gray, gray], axis=-1).astype(np.float64)
    color = np.asarray(OVERLAY_COLOR, dtype=np.float64)
    rgb[m] = (1.0 - OVERLAY_ALPHA) * rgb[m] + OVERLAY_ALPHA * color
    return _png_bytes(PILImage.fromarray(np.rint(rgb).astype(np.uint8), mode="RGB"))


def loss_curve_png(rows: Sequence[dict], width: int = 480, height: int = 320) -> bytes:
    """Render an (epoch, loss) table as a simple polyline chart."""
    img = PILImage.new("RGB", (width, height), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    margin = 32
    draw.rectangle(
        [margin, margin, width - margin, height - margin], outline=(128, 128, 128)
    )
    pts = [(float(r["epoch"]), float(r["loss"])) for r in rows]
    if pts:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        x_span = (x_hi - x_lo) or 1.0
        y_span = (y_hi - y_lo) or 1.0
        coords = [
            (
                margin + (x - x_lo) / x_span * (width - 2 * margin),
                height - margin - (y - y_lo) / y_span * (height - 2 * margin),
            )
            for x, y in pts
        ]
        if len(coords) == 1:
            draw.ellipse(
                [coords[0][0] - 2, coords[0][1] - 2, coords[0][0] + 2, coords[0][1] + 2],
                fill=(30, 80, 200),
            )
        else:
            draw.line(coords, fill=(30, 80, 200), width=2)
    return _png_bytes(img)


def occlusion_sensitivity(
    model: PixelClassifier,
    img: np.ndarray,
    block: int,
    stride: int,
    scorer: str = "mean_prob",
    gt: np.ndarray | None = None,
) -> np.ndarray:
    """Score drop when a mean-valued block slides over the image.

    heat[i, j] = base_score - score(occluded at window (i, j)); a window's
    top-left corner sits at (i*stride, j*stride). Heatmap dims equal the
    sliding-window grid. Scorers: "mean_prob" (mean predicted probability)
    or "dice_vs" (Dice of the 0.5-thresholded prediction against `gt`).
    """
    arr = np.asarray(img, dtype=np.float64)
    if block < 1 or stride < 1:
        raise ValueError("block and stride must be >= 1")
    h, w = arr.shape
    if block > h or block > w:
        raise BlockLargerThanImage(f"block {block} exceeds image {arr.shape}")

    def score(image: np.ndarray) -> float:
        prob = predict_pixel_classifier(model, image)
        if scorer == "mean_prob":
            return float(prob.mean())
        if scorer == "dice_vs":
            if gt is None:
                raise ValueError("dice_vs scorer requires a ground-truth mask")
            return dice_score(prob >= 0.5, gt)
        raise ValueError(f"unknown scorer {scorer!r}")

    base = score(arr)
    fill = float(arr.mean())
    rows = (h - block) // stride + 1
    cols = (w - block) // stride + 1
    heat = np.zeros((rows, cols), dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            patched = arr.copy()
            patched[i * stride : i * stride + block, j * stride : j * stride + block] = fill
            heat[i, j] = base - score(patched)
    return heat
