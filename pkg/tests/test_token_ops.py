import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokenbridge.core import TokenTensor
from tokenbridge.token_ops import (
    CorruptPayload,
    ShapeMismatch,
    merge_to_density,
    pack,
    unpack,
)


def make_tensor(rng, frames=4, tpf=8, dim=6):
    data = rng.normal(size=(frames, tpf, dim)).astype(np.float32)
    return TokenTensor(frames, tpf, dim, data)


# -- merging ------------------------------------------------------------------

def test_merge_constant_tokens(rng):
    v = rng.normal(size=5).astype(np.float32)
    data = np.tile(v, (3, 8, 1))
    t = TokenTensor(3, 8, 5, data)
    for density in (1, 2, 4, 8):
        merged = merge_to_density(t, density)
        assert merged.tokens_per_frame == density
        assert np.allclose(merged.data, v, atol=1e-6)


def test_merge_identity_at_full_density(rng):
    t = make_tensor(rng)
    assert merge_to_density(t, t.tokens_per_frame) is t


def test_merge_group_means():
    t = TokenTensor(1, 4, 1, np.array([1.0, 3.0, 5.0, 7.0], np.float32))
    merged = merge_to_density(t, 2)
    assert merged.data.ravel().tolist() == [2.0, 6.0]


def test_merge_uneven_balanced_partition():
    t = TokenTensor(1, 5, 1, np.array([1.0, 2.0, 3.0, 4.0, 5.0], np.float32))
    merged = merge_to_density(t, 2)
    # groups of 3 and 2: means 2.0 and 4.5
    assert merged.data.ravel().tolist() == [2.0, 4.5]
    assert "uneven_merge" in merged.flags


def test_merge_rejects_oversized_density(rng):
    t = make_tensor(rng, tpf=8)
    with pytest.raises(ValueError):
        merge_to_density(t, 16)


def test_merge_linearity(rng):
    a = make_tensor(rng)
    b = make_tensor(rng)
    s = TokenTensor(a.frames, a.tokens_per_frame, a.dim, a.data + b.data)
    m = merge_to_density
    assert np.allclose(m(s, 2).data, m(a, 2).data + m(b, 2).data, atol=1e-5)
    c = TokenTensor(a.frames, a.tokens_per_frame, a.dim, 3.0 * a.data)
    assert np.allclose(m(c, 2).data, 3.0 * m(a, 2).data, atol=1e-5)


def test_merge_preserves_global_mean(rng):
    t = make_tensor(rng, frames=6, tpf=8, dim=4)
    for density in (1, 2, 4):
        merged = merge_to_density(t, density)
        assert np.allclose(merged.data.mean(axis=(0, 1)), t.data.mean(axis=(0, 1)),
                           atol=1e-6)


# -- payload codec -----------------------------------------------------------------

def test_pack_header_magic(rng):
    payload = pack(make_tensor(rng))
    assert payload[:4] == b"TBT1"


def test_zero_tensor_compresses_below_one_percent():
    t = TokenTensor(64, 8, 256, np.zeros((64, 8, 256), np.float32))
    payload = pack(t)
    assert len(payload) < 0.01 * 64 * 8 * 256 * 4


def test_random_tensor_round_trip_and_bound(rng):
    t = make_tensor(rng, frames=8, tpf=16, dim=32)
    payload = pack(t)
    raw = 8 * 16 * 32 * 4
    assert len(payload) <= raw + 256  # lossless bound: header + format overhead
    assert unpack(payload) == t


def test_truncated_payload_rejected(rng):
    payload = pack(make_tensor(rng))
    with pytest.raises(CorruptPayload):
        unpack(payload[: len(payload) - 3])


def test_flipped_byte_rejected(rng):
    payload = bytearray(pack(make_tensor(rng)))
    payload[len(payload) // 2] ^= 0xFF
    with pytest.raises(CorruptPayload):
        unpack(bytes(payload))


def test_bad_magic_rejected(rng):
    payload = bytearray(pack(make_tensor(rng)))
    payload[:4] = b"XXXX"
    with pytest.raises(CorruptPayload):
        unpack(bytes(payload))


def test_invalid_tensor_rejected():
    t = TokenTensor(1, 2, 1, np.array([[np.nan], [1.0]], np.float32).reshape(1, 2, 1))
    with pytest.raises(ShapeMismatch):
        pack(t)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 9), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_pack_unpack_identity_property(frames, tpf, dim, seed):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(frames, tpf, dim)).astype(np.float32)
    t = TokenTensor(frames, tpf, dim, data, clip_size=int(rng.integers(1, 6)))
    assert unpack(pack(t)) == t
