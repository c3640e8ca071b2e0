from __future__ import annotations

import numpy as np
import pytest

from medas.tools.augment import CropOutOfBounds, crop, gaussian_noise, mirror, random_crop, rot90


@pytest.fixture()
def img():
    return np.random.default_rng(0).random((9, 12))


def test_mirror_twice_is_identity(img):
    assert np.array_equal(mirror(mirror(img, 0), 0), img)
    assert np.array_equal(mirror(mirror(img, 1), 1), img)


def test_rot90_four_times_is_identity(img):
    out = img
    for _ in range(4):
        out = rot90(out, 1)
    assert np.array_equal(out, img)
    assert np.array_equal(rot90(img, 4), img)


def test_crop_window():
    img = np.arange(20).reshape(4, 5)
    out = crop(img, (1, 2), (2, 3))
    assert np.array_equal(out, img[1:3, 2:5])


def test_crop_out_of_bounds():
    with pytest.raises(CropOutOfBounds):
        crop(np.zeros((4, 4)), (2, 2), (3, 3))


def test_random_crop_deterministic(img):
    a = random_crop(img, (4, 4), np.random.Generator(np.random.PCG64(9)))
    b = random_crop(img, (4, 4), np.random.Generator(np.random.PCG64(9)))
    assert np.array_equal(a, b)
    assert a.shape == (4, 4)


def test_random_crop_too_large(img):
    with pytest.raises(CropOutOfBounds):
        random_crop(img, (100, 4), np.random.default_rng(0))


def test_noise_sigma_zero_identity(img):
    out = gaussian_noise(img, 0.0, np.random.default_rng(1))
    assert np.array_equal(out, img)


def test_noise_clamps_to_input_range(img):
    out = gaussian_noise(img, 10.0, np.random.default_rng(1))
    assert out.min() >= img.min() and out.max() <= img.max()


def test_noise_deterministic_per_seed(img):
    a = gaussian_noise(img, 0.3, np.random.Generator(np.random.PCG64(5)))
    b = gaussian_noise(img, 0.3, np.random.Generator(np.random.PCG64(5)))
    c = gaussian_noise(img, 0.3, np.random.Generator(np.random.PCG64(6)))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
