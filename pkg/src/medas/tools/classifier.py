"""Trainable logistic pixel classifier over a fixed hand-crafted feature basis.

The stand-in "network" for desk-scale pipelines: per-pixel features are
(intensity, 3x3 box-blur, 7x7 box-blur, gradient magnitude); the quadratic
variant appends the squares of those four. Training is plain mini-batch
gradient descent on either binary cross-entropy or soft-Dice loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .common import box_blur, gradient_magnitude

BASE_FEATURES = ("intensity", "box3", "box7", "gradmag")
CRITERIA = ("bce", "dice")
VARIANTS = ("linear", "quadratic-features")
DICE_EPS = 1.0
BATCH_SIZE = 1024

MODEL_FORMAT = "medas-pixel-classifier"


class ShapeMismatch(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class ModelCorrupt(ValueError):
    pass


@dataclass(frozen=True)
class HyperParams:
    epochs: int
    learning_rate: float
    criterion: str = "bce"
    model_variant: str = "linear"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if self.model_variant not in VARIANTS:
            raise ValueError(f"model_variant must be one of {VARIANTS}")


@dataclass(frozen=True)
class PixelClassifier:
    w: tuple[float, ...]
    b: float
    variant: str
    meta: dict

    def to_blob(self) -> bytes:
        body = {
            "format": MODEL_FORMAT,
            "version": 1,
            "variant": self.variant,
            "w": list(self.w),
            "b": self.b,
            "meta": self.meta,
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_blob(cls, data: bytes) -> PixelClassifier:
        try:
            body = json.loads(data.decode("utf-8"))
            if body.get("format") != MODEL_FORMAT or body.get("version") != 1:
                raise ValueError("unrecognized model container")
            variant = body["variant"]
            w = tuple(float(v) for v in body["w"])
            b = float(body["b"])
            meta = dict(body.get("meta", {}))
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
            raise ModelCorrupt(f"cannot deserialize model: {exc}") from exc
        if variant not in VARIANTS or len(w) != feature_dim(variant):
            raise ModelCorrupt(f"model variant/weight shape inconsistent: {variant}, {len(w)}")
        return cls(w=w, b=b, variant=variant, meta=meta)


def feature_dim(variant: str) -> int:
    return 4 if variant == "linear" else 8


def pixel_features(img: np.ndarray, variant: str = "linear") -> np.ndarray:
    """(H*W, d) float64 feature matrix for one grayscale image."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected a 2D grayscale image, got ndim={arr.ndim}")
    feats = np.stack(
        [arr, box_blur(arr, 3), box_blur(arr, 7), gradient_magnitude(arr)], axis=-1
    ).reshape(-1, 4)
    if variant == "quadratic-features":
        feats = np.concatenate([feats, feats**2], axis=1)
    return feats


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(z: np.ndarray, g: np.ndarray) -> float:
    """Mean binary cross-entropy from logits, overflow-safe."""
    return float(np.mean(np.maximum(z, 0.0) - z * g + np.log1p(np.exp(-np.abs(z)))))


def soft_dice_loss(p: np.ndarray, g: np.ndarray) -> float:
    """1 - (2*sum(p*g)+eps) / (sum(p)+sum(g)+eps) with eps = 1.0."""
    num = 2.0 * float(np.dot(p, g)) + DICE_EPS
    den = float(p.sum() + g.sum()) + DICE_EPS
    return 1.0 - num / den


def loss_and_grad(
    w: np.ndarray, b: float, phi: np.ndarray, g: np.ndarray, criterion: str
) -> tuple[float, np.ndarray, float]:
    """Loss plus analytic gradients d/dw and d/db on one batch."""
    z = phi @ w + b
    p = sigmoid(z)
    if criterion == "bce":
        loss = bce_loss(z, g)
        dz = (p - g) / len(g)
    elif criterion == "dice":
        num = 2.0 * float(np.dot(p, g)) + DICE_EPS
        den = float(p.sum() + g.sum()) + DICE_EPS
        loss = 1.0 - num / den
        dp = -(2.0 * g * den - num) / (den * den)
        dz = dp * p * (1.0 - p)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    return loss, phi.T @ dz, float(dz.sum())


def evaluate_loss(w: np.ndarray, b: float, phi: np.ndarray, g: np.ndarray, criterion: str) -> float:
    z = phi @ w + b
    if criterion == "bce":
        return bce_loss(z, g)
    return soft_dice_loss(sigmoid(z), g)


def train_pixel_classifier(
    images: list[np.ndarray],
    labels: list[np.ndarray],
    hp: HyperParams,
    seed: int,
) -> tuple[PixelClassifier, list[dict]]:
    """Fit the classifier with mini-batch gradient descent (batch=1024 pixels).

    One epoch is one full pass of seeded batches over the pooled pixels; the
    returned loss table holds the full-training-set loss after each epoch.
    """
    if not images:
        raise EmptyDataset("no training items")
    if len(images) != len(labels):
        raise ShapeMismatch("images and labels differ in length")
    feats = []
    targets = []
    for img, lab in zip(images, labels):
        if np.asarray(img).shape != np.asarray(lab).shape:
            raise ShapeMismatch(
                f"image shape {np.asarray(img).shape} != label shape {np.asarray(lab).shape}"
            )
        feats.append(pixel_features(img, hp.model_variant))
        targets.append(np.asarray(lab, dtype=np.float64).ravel())
    phi = np.concatenate(feats, axis=0)
    g = np.concatenate(targets, axis=0)
    n = len(g)
    rng = np.random.Generator(np.random.PCG64(seed))
    d = feature_dim(hp.model_variant)
    w = np.zeros(d, dtype=np.float64)
    b = 0.0
    steps = max(1, -(-n // BATCH_SIZE))
    curve: list[dict] = []
    for epoch in range(1, hp.epochs + 1):
        for _ in range(steps):
            idx = rng.integers(0, n, size=min(BATCH_SIZE, n))
            _, dw, db = loss_and_grad(w, b, phi[idx], g[idx], hp.criterion)
            w -= hp.learning_rate * dw
            b -= hp.learning_rate * db
        curve.append({"epoch": epoch, "loss": evaluate_loss(w, b, phi, g, hp.criterion)})
    meta = {
        "epochs": hp.epochs,
        "learning_rate": hp.learning_rate,
        "criterion": hp.criterion,
    }
    model = PixelClassifier(w=tuple(float(v) for v in w), b=b, variant=hp.model_variant, meta=meta)
    return model, curve


def predict_pixel_classifier(model: PixelClassifier, img: np.ndarray) -> np.ndarray:
    """Per-pixel probability map sigma(w . phi + b), float64 in (0, 1)."""
    phi = pixel_features(img, model.variant)
    z = phi @ np.asarray(model.w, dtype=np.float64) + model.b
    return sigmoid(z).reshape(np.asarray(img).shape)
