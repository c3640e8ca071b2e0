"""Histopathology color tools: LAB statistics transfer and H&E unmixing.

Color transfer follows the classic recipe: convert sRGB to CIELAB under D65,
match per-channel mean/std to the target image's statistics, convert back.
Unmixing converts RGB to optical density and solves the least-squares system
against a fixed two-stain matrix; the default hematoxylin/eosin vectors follow
the standard published convention and can be overridden per call.
"""

from __future__ import annotations

import numpy as np

# Row vectors of the default H&E stain matrix (RGB absorption), unnormalized.
DEFAULT_HEMATOXYLIN_RGB = (0.65, 0.70, 0.29)
DEFAULT_EOSIN_RGB = (0.07, 0.99, 0.11)

_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_SRGB = np.linalg.inv(_SRGB_TO_XYZ)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])
_DELTA = 6.0 / 29.0


def _srgb_linearize(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _srgb_delinearize(c: np.ndarray) -> np.ndarray:
    c = np.clip(c, 0.0, 1.0)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """(H, W, 3) sRGB (u8 or float in [0,1]) -> CIELAB float64, D65 white."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) RGB image, got shape {arr.shape}")
    if np.asarray(rgb).dtype.kind in "ui":
        arr = arr / 255.0
    xyz = _srgb_linearize(arr) @ _SRGB_TO_XYZ.T
    f = _lab_f(xyz / _WHITE_D65)
    lab = np.empty_like(arr)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_srgb_u8(lab: np.ndarray) -> np.ndarray:
    """CIELAB -> sRGB u8 with gamut clamping and round-to-nearest."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)], axis=-1) * _WHITE_D65
    rgb = _srgb_delinearize(xyz @ _XYZ_TO_SRGB.T)
    return np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def lab_stats(rgb: np.ndarray) -> tuple[float, float, float, float, float, float]:
    """Per-channel LAB means and population stds: (mL, mA, mB, sL, sA, sB)."""
    lab = srgb_to_lab(rgb)
    means = lab.reshape(-1, 3).mean(axis=0)
    stds = lab.reshape(-1, 3).std(axis=0)
    return (*(float(v) for v in means), *(float(v) for v in stds))


# Channel stds at float rounding scale are degenerate, not real variance.
_STD_FLOOR = 1e-8


def reinhard_lab_transform(
    rgb: np.ndarray, target_stats: tuple[float, float, float, float, float, float]
) -> np.ndarray:
    """Per-channel LAB statistics transfer, before re-quantization to sRGB.

    out = (v - mu_src) * (sigma_tgt / sigma_src) + mu_tgt; a zero-variance
    source channel passes through with the mean shift only.
    """
    lab = srgb_to_lab(rgb)
    t_mean = np.asarray(target_stats[:3], dtype=np.float64)
    t_std = np.asarray(target_stats[3:], dtype=np.float64)
    flat = lab.reshape(-1, 3)
    s_mean = flat.mean(axis=0)
    s_std = flat.std(axis=0)
    live = s_std > _STD_FLOOR
    scale = np.where(live, np.divide(t_std, s_std, where=live), 1.0)
    return (lab - s_mean) * scale + t_mean


def reinhard_normalize(
    rgb: np.ndarray, target_stats: tuple[float, float, float, float, float, float]
) -> np.ndarray:
    """reinhard_lab_transform converted back to u8 sRGB with gamut clamping."""
    return lab_to_srgb_u8(reinhard_lab_transform(rgb, target_stats))


def _stain_matrix(
    h_rgb: tuple[float, float, float], e_rgb: tuple[float, float, float]
) -> np.ndarray:
    m = np.array([h_rgb, e_rgb], dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("stain vectors must be nonzero")
    return m / norms


def rgb_to_od(rgb: np.ndarray) -> np.ndarray:
    """Optical density per channel: OD = -log10((v + 1) / 256)."""
    arr = np.asarray(rgb, dtype=np.float64)
    return -np.log10((arr + 1.0) / 256.0)


def od_to_rgb(od: np.ndarray) -> np.ndarray:
    """Invert rgb_to_od without quantization."""
    return 256.0 * np.power(10.0, -np.asarray(od, dtype=np.float64)) - 1.0


def stain_deconvolve(
    rgb: np.ndarray,
    h_rgb: tuple[float, float, float] = DEFAULT_HEMATOXYLIN_RGB,
    e_rgb: tuple[float, float, float] = DEFAULT_EOSIN_RGB,
) -> tuple[np.ndarray, np.ndarray]:
    """Unmix an RGB image into hematoxylin and eosin concentration maps.

    Solves OD = M^T c per pixel in the least-squares sense with row-normalized
    stain matrix M; concentrations are linear in OD. Returns two float32 maps.
    """
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) RGB image, got shape {arr.shape}")
    m = _stain_matrix(h_rgb, e_rgb)
    od = rgb_to_od(arr)
    pinv = np.linalg.pinv(m.T)  # (2, 3): c = pinv @ od
    conc = od @ pinv.T
    h = conc[..., 0].astype(np.float32)
    e = conc[..., 1].astype(np.float32)
    return h, e


def synthesize_stain_pixel(
    concentrations: tuple[float, float],
    h_rgb: tuple[float, float, float] = DEFAULT_HEMATOXYLIN_RGB,
    e_rgb: tuple[float, float, float] = DEFAULT_EOSIN_RGB,
) -> np.ndarray:
    """Forward-synthesize the (unquantized) RGB of given stain concentrations."""
    m = _stain_matrix(h_rgb, e_rgb)
    od = np.asarray(concentrations, dtype=np.float64) @ m
    return od_to_rgb(od)
