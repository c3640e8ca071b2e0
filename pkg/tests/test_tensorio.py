from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from medas.tensorio import (
    DTYPE_CODES,
    HeaderInvalid,
    NdimOutOfRange,
    UnsupportedDtype,
    decode_tensor,
    encode_tensor,
)


def test_single_f64_scalar_is_18_bytes():
    data = encode_tensor(np.zeros((1, 1), dtype=np.float64))
    assert len(data) == 4 + 1 + 1 + 4 + 4 + 8  # magic, dtype, ndim, 2 dims, payload


def test_1d_f64_is_18_bytes():
    # 4 magic + 1 dtype + 1 ndim + 4 dim + 8 payload
    assert len(encode_tensor(np.zeros(1, dtype=np.float64))) == 18


def test_roundtrip_3x4x5_f32():
    rng = np.random.default_rng(7)
    arr = rng.random((3, 4, 5)).astype(np.float32)
    out = decode_tensor(encode_tensor(arr))
    assert out.dtype == arr.dtype and out.shape == arr.shape
    assert np.array_equal(out, arr)


def test_ndim_5_rejected():
    with pytest.raises(NdimOutOfRange):
        encode_tensor(np.zeros((1, 1, 1, 1, 1), dtype=np.float32))


def test_unsupported_dtype_rejected():
    with pytest.raises(UnsupportedDtype):
        encode_tensor(np.zeros(3, dtype=np.complex128))


def test_truncated_payload_rejected():
    data = encode_tensor(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(HeaderInvalid):
        decode_tensor(data[:-4])  # 2*2*4 = 16 != 12


def test_bad_magic_rejected():
    with pytest.raises(HeaderInvalid):
        decode_tensor(b"NOPE" + b"\x00" * 20)


_dtypes = st.sampled_from(list(DTYPE_CODES.values()))
_shapes = st.lists(st.integers(min_value=1, max_value=6), min_size=1, max_size=4)


@settings(max_examples=200, deadline=None)
@given(dtype=_dtypes, shape=_shapes, data=st.data())
def test_roundtrip_property(dtype, shape, data):
    arr = data.draw(arrays(dtype=dtype, shape=tuple(shape)))
    out = decode_tensor(encode_tensor(arr))
    assert out.dtype == np.dtype(dtype)
    assert out.shape == tuple(shape)
    assert np.array_equal(out, arr, equal_nan=True)


def test_bulk_roundtrip_identity():
    # Dense randomized sweep across dtypes and shapes.
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        dtype = list(DTYPE_CODES.values())[int(rng.integers(0, 4))]
        ndim = int(rng.integers(1, 5))
        shape = tuple(int(rng.integers(1, 5)) for _ in range(ndim))
        if np.dtype(dtype).kind == "f":
            arr = rng.standard_normal(shape).astype(dtype)
        else:
            arr = rng.integers(0, 200, size=shape).astype(dtype)
        assert np.array_equal(decode_tensor(encode_tensor(arr)), arr)
