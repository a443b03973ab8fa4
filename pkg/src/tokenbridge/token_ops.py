"""Token merging to a target density and the TBT1 offload payload codec.

Merging is contiguous average pooling over each frame's token sequence.
Payloads carry a fixed little-endian header followed by the raw float32
body compressed as one Zstandard frame (level 3); a CRC over the
compressed body catches wire corruption before decompression is tried.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from . import _zstd
from .core import TokenTensor

PAYLOAD_MAGIC = b"TBT1"
PAYLOAD_VERSION = 1
_HEADER = struct.Struct("<4sHIIIBBI")  # magic, ver, frames, tpf, dim, dtype, clip, crc
DTYPE_F32 = 0
ZSTD_LEVEL = 3


class IndivisibleDensity(Warning):
    pass


class CorruptPayload(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


def _group_slices(total: int, groups: int):
    """Balanced contiguous partition; larger groups come first when uneven."""
    base, extra = divmod(total, groups)
    start = 0
    for g in range(groups):
        size = base + (1 if g < extra else 0)
        yield start, start + size
        start += size


def merge_to_density(raw: TokenTensor, density: int) -> TokenTensor:
    """Average-pool each frame's tokens down to ``density`` per frame.

    The per-frame sequence is split into ``density`` contiguous groups and
    each group is replaced by its mean. Uneven splits are balanced and
    flagged in the result's metadata.
    """
    if density < 1:
        raise ValueError("density must be >= 1")
    if density > raw.tokens_per_frame:
        raise ValueError(
            f"density {density} exceeds raw tokens per frame {raw.tokens_per_frame}")
    if density == raw.tokens_per_frame:
        return raw
    flags = raw.flags
    if raw.tokens_per_frame % density == 0:
        group = raw.tokens_per_frame // density
        data = raw.data.reshape(raw.frames, density, group, raw.dim).mean(axis=2)
    else:
        slices = list(_group_slices(raw.tokens_per_frame, density))
        data = np.stack([raw.data[:, a:b].mean(axis=1) for a, b in slices], axis=1)
        if "uneven_merge" not in flags:
            flags = flags + ("uneven_merge",)
    return TokenTensor(raw.frames, density, raw.dim, data.astype(np.float32),
                       clip_size=raw.clip_size, flags=flags)


def pack(tokens: TokenTensor) -> bytes:
    """Serialize a token tensor into one TBT1 payload."""
    errs = tokens.validate()
    if errs:
        raise ShapeMismatch("; ".join(errs))
    body_raw = np.ascontiguousarray(tokens.data, dtype="<f4").tobytes()
    body = _zstd.compress(body_raw, ZSTD_LEVEL)
    header = _HEADER.pack(
        PAYLOAD_MAGIC, PAYLOAD_VERSION, tokens.frames, tokens.tokens_per_frame,
        tokens.dim, DTYPE_F32, tokens.clip_size, zlib.crc32(body) & 0xFFFFFFFF,
    )
    return header + body


def unpack(payload: bytes) -> TokenTensor:
    """Inverse of pack; raises CorruptPayload on any framing or checksum error."""
    if len(payload) < _HEADER.size:
        raise CorruptPayload("payload shorter than header")
    magic, version, frames, tpf, dim, dtype, clip_size, crc = _HEADER.unpack_from(payload)
    if magic != PAYLOAD_MAGIC:
        raise CorruptPayload(f"bad magic {magic!r}")
    if version != PAYLOAD_VERSION:
        raise CorruptPayload(f"unsupported payload version {version}")
    if dtype != DTYPE_F32:
        raise CorruptPayload(f"unsupported dtype tag {dtype}")
    body = payload[_HEADER.size:]
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CorruptPayload("body checksum mismatch")
    expected = frames * tpf * dim * 4
    try:
        raw = _zstd.decompress(body, expected_size=expected)
    except _zstd.ZstdError as e:
        raise CorruptPayload(str(e)) from e
    if len(raw) != expected:
        raise ShapeMismatch(f"body is {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype="<f4").reshape(frames, tpf, dim)
    return TokenTensor(frames, tpf, dim, data.copy(), clip_size=clip_size)
