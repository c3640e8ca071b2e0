from __future__ import annotations

import numpy as np
import pytest

from medas.tools.classifier import (
    EmptyDataset,
    HyperParams,
    ModelCorrupt,
    PixelClassifier,
    ShapeMismatch,
    feature_dim,
    loss_and_grad,
    pixel_features,
    predict_pixel_classifier,
    soft_dice_loss,
    train_pixel_classifier,
)
from medas.tools.metrics import dice_score


def separable_fixture(n=4, shape=(48, 48), seed=3):
    rng = np.random.Generator(np.random.PCG64(seed))
    imgs, labs = [], []
    for _ in range(n):
        lab = (rng.random(shape) < 0.3).astype(np.uint8)
        imgs.append(lab.astype(np.float64))  # fg intensity 1.0, bg 0.0
        labs.append(lab)
    return imgs, labs


def test_separable_training_reaches_dice_99():
    imgs, labs = separable_fixture()
    hp = HyperParams(epochs=50, learning_rate=0.1, criterion="bce")
    model, curve = train_pixel_classifier(imgs, labs, hp, seed=1)
    # Threshold oracle: the best fixed intensity threshold is perfect here.
    assert dice_score(imgs[0] >= 0.5, labs[0]) == 1.0
    pred = predict_pixel_classifier(model, imgs[0]) >= 0.5
    assert dice_score(pred, labs[0]) >= 0.99
    assert len(curve) == 50 and curve[0]["epoch"] == 1


def test_loss_non_increasing_on_separable():
    imgs, labs = separable_fixture()
    hp = HyperParams(epochs=40, learning_rate=0.1, criterion="bce")
    _, curve = train_pixel_classifier(imgs, labs, hp, seed=2)
    losses = [row["loss"] for row in curve]
    drops = sum(1 for a, b in zip(losses, losses[1:]) if b <= a + 1e-12)
    assert drops / (len(losses) - 1) >= 0.95


def test_soft_dice_perfect_prediction_within_eps():
    g = np.ones(500)
    # p == g exactly: loss = 1 - (2n+1)/(2n+1) = 0; with p in (0,1) the
    # epsilon bound applies.
    assert soft_dice_loss(g, g) == pytest.approx(0.0)
    p = np.full(500, 1.0 - 1e-9)
    bound = 2 * 1.0 / (2 * g.sum() + 1.0)
    assert soft_dice_loss(p, g) <= bound


@pytest.mark.parametrize("criterion", ["bce", "dice"])
def test_analytic_gradient_matches_central_differences(criterion):
    rng = np.random.Generator(np.random.PCG64(11))
    h = 1e-5
    for _ in range(10):
        phi = rng.normal(0, 1, (64, 4))
        g = (rng.random(64) < 0.4).astype(np.float64)
        w = rng.normal(0, 0.5, 4)
        b = float(rng.normal())
        _, dw, db = loss_and_grad(w, b, phi, g, criterion)
        num = np.zeros(4)
        for j in range(4):
            wp, wm = w.copy(), w.copy()
            wp[j] += h
            wm[j] -= h
            lp, _, _ = loss_and_grad(wp, b, phi, g, criterion)
            lm, _, _ = loss_and_grad(wm, b, phi, g, criterion)
            num[j] = (lp - lm) / (2 * h)
        lp, _, _ = loss_and_grad(w, b + h, phi, g, criterion)
        lm, _, _ = loss_and_grad(w, b - h, phi, g, criterion)
        num_b = (lp - lm) / (2 * h)
        denom = max(np.linalg.norm(num), 1e-12)
        assert np.linalg.norm(dw - num) / denom <= 1e-4
        assert abs(db - num_b) / max(abs(num_b), 1e-12) <= 1e-4


def test_zero_model_predicts_half():
    model = PixelClassifier(w=(0.0, 0.0, 0.0, 0.0), b=0.0, variant="linear", meta={})
    prob = predict_pixel_classifier(model, np.random.default_rng(0).random((6, 6)))
    assert np.allclose(prob, 0.5)


def test_large_bias_saturates():
    model = PixelClassifier(w=(0.0, 0.0, 0.0, 0.0), b=50.0, variant="linear", meta={})
    prob = predict_pixel_classifier(model, np.zeros((4, 4)))
    assert np.all(prob > 1.0 - 1e-9)


def test_prediction_deterministic():
    imgs, labs = separable_fixture(n=2)
    hp = HyperParams(epochs=5, learning_rate=0.1)
    model, _ = train_pixel_classifier(imgs, labs, hp, seed=7)
    a = predict_pixel_classifier(model, imgs[0])
    b = predict_pixel_classifier(model, imgs[0])
    assert np.array_equal(a, b)


def test_blob_roundtrip_and_corrupt():
    model = PixelClassifier(w=(0.1, -0.2, 0.3, 0.4), b=0.5, variant="linear", meta={"epochs": 3})
    again = PixelClassifier.from_blob(model.to_blob())
    assert again == model
    with pytest.raises(ModelCorrupt):
        PixelClassifier.from_blob(b"not json")
    with pytest.raises(ModelCorrupt):
        PixelClassifier.from_blob(b'{"format":"medas-pixel-classifier","version":1,"variant":"linear","w":[1],"b":0,"meta":{}}')


def test_quadratic_variant_dimensions():
    assert feature_dim("linear") == 4
    assert feature_dim("quadratic-features") == 8
    feats = pixel_features(np.random.default_rng(0).random((5, 5)), "quadratic-features")
    assert feats.shape == (25, 8)
    assert np.allclose(feats[:, 4:], feats[:, :4] ** 2)


def test_shape_mismatch_and_empty():
    with pytest.raises(EmptyDataset):
        train_pixel_classifier([], [], HyperParams(epochs=1, learning_rate=0.1), seed=0)
    with pytest.raises(ShapeMismatch):
        train_pixel_classifier(
            [np.zeros((4, 4))], [np.zeros((5, 5))], HyperParams(epochs=1, learning_rate=0.1), seed=0
        )


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        HyperParams(epochs=0, learning_rate=0.1)
    with pytest.raises(ValueError):
        HyperParams(epochs=1, learning_rate=0.0)
    with pytest.raises(ValueError):
        HyperParams(epochs=1, learning_rate=0.1, criterion="lovasz")
