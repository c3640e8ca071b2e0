"""Portable binary tensor container (magic "MDT1"), the neutral artifact format.

Layout, all little-endian:
    bytes 0..3   magic "MDT1"
    byte  4      dtype code: 0=u8, 1=i64, 2=f32, 3=f64
    byte  5      ndim, 1..4
    next 4*ndim  dims as u32
    rest         payload, row-major
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MDT1"
MAX_NDIM = 4

DTYPE_CODES: dict[int, np.dtype] = {
    0: np.dtype("u1"),
    1: np.dtype("<i8"),
    2: np.dtype("<f4"),
    3: np.dtype("<f8"),
}
_CODE_BY_KIND = {np.dtype(d).str.lstrip("<|=").lower(): c for c, d in DTYPE_CODES.items()}


class TensorFormatError(ValueError):
    """Malformed tensor bytes or unsupported shape/dtype."""


class UnsupportedDtype(TensorFormatError):
    pass


class NdimOutOfRange(TensorFormatError):
    pass


class HeaderInvalid(TensorFormatError):
    """Header contradicts the payload length or carries bad fields."""


def _dtype_code(dtype: np.dtype) -> int:
    key = np.dtype(dtype).str.lstrip("<|=").lower()
    if key not in _CODE_BY_KIND:
        raise UnsupportedDtype(f"dtype {dtype} not in supported set {list(DTYPE_CODES.values())}")
    return _CODE_BY_KIND[key]


def encode_tensor(arr: np.ndarray) -> bytes:
    """Serialize an array; decode_tensor inverts this bit-exactly."""
    code = _dtype_code(arr.dtype)
    if not 1 <= arr.ndim <= MAX_NDIM:
        raise NdimOutOfRange(f"ndim {arr.ndim} outside 1..{MAX_NDIM}")
    if any(d > 0xFFFFFFFF for d in arr.shape):
        raise HeaderInvalid("dimension exceeds u32")
    header = MAGIC + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes()
    return header + payload


def decode_tensor(data: bytes) -> np.ndarray:
    arr, _ = _decode(data)
    return arr


def validate_tensor_bytes(data: bytes) -> None:
    """Raise HeaderInvalid/TensorFormatError when the container is malformed."""
    _decode(data)


def _decode(data: bytes) -> tuple[np.ndarray, int]:
    if len(data) < 6 or data[:4] != MAGIC:
        raise HeaderInvalid("missing MDT1 magic")
    code, ndim = struct.unpack_from("<BB", data, 4)
    if code not in DTYPE_CODES:
        raise UnsupportedDtype(f"unknown dtype code {code}")
    if not 1 <= ndim <= MAX_NDIM:
        raise NdimOutOfRange(f"ndim {ndim} outside 1..{MAX_NDIM}")
    header_len = 6 + 4 * ndim
    if len(data) < header_len:
        raise HeaderInvalid("truncated dims")
    dims = struct.unpack_from(f"<{ndim}I", data, 6)
    dtype = DTYPE_CODES[code]
    expected = int(np.prod(dims, dtype=np.uint64)) * dtype.itemsize
    payload = data[header_len:]
    if len(payload) != expected:
        raise HeaderInvalid(
            f"payload length {len(payload)} != product(dims)*itemsize = {expected}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    return arr.copy(), header_len
