"""Minimal ctypes binding to the system Zstandard library.

Produces and consumes standard zstd frames (RFC 8878) via the one-shot
simple API. Only what the token payload codec needs is exposed.
"""

from __future__ import annotations

import ctypes
import ctypes.util

_CONTENTSIZE_UNKNOWN = 2**64 - 1
_CONTENTSIZE_ERROR = 2**64 - 2


class ZstdError(RuntimeError):
    pass


def _load():
    name = ctypes.util.find_library("zstd") or "libzstd.so.1"
    try:
        lib = ctypes.CDLL(name)
    except OSError as e:  # pragma: no cover
        raise ZstdError(f"cannot load zstd shared library ({name})") from e
    lib.ZSTD_compressBound.restype = ctypes.c_size_t
    lib.ZSTD_compressBound.argtypes = [ctypes.c_size_t]
    lib.ZSTD_compress.restype = ctypes.c_size_t
    lib.ZSTD_compress.argtypes = [
        ctypes.c_void_p, ctypes.c_size_t, ctypes.c_char_p, ctypes.c_size_t, ctypes.c_int,
    ]
    lib.ZSTD_decompress.restype = ctypes.c_size_t
    lib.ZSTD_decompress.argtypes = [
        ctypes.c_void_p, ctypes.c_size_t, ctypes.c_char_p, ctypes.c_size_t,
    ]
    lib.ZSTD_isError.restype = ctypes.c_uint
    lib.ZSTD_isError.argtypes = [ctypes.c_size_t]
    lib.ZSTD_getFrameContentSize.restype = ctypes.c_ulonglong
    lib.ZSTD_getFrameContentSize.argtypes = [ctypes.c_char_p, ctypes.c_size_t]
    return lib


_lib = _load()


def compress(data: bytes, level: int = 3) -> bytes:
    bound = _lib.ZSTD_compressBound(len(data))
    dst = ctypes.create_string_buffer(bound)
    n = _lib.ZSTD_compress(dst, bound, data, len(data), level)
    if _lib.ZSTD_isError(n):
        raise ZstdError("compression failed")
    return dst.raw[:n]


def decompress(data: bytes, expected_size: int | None = None) -> bytes:
    """Decompress one zstd frame. ``expected_size`` caps the output buffer."""
    size = _lib.ZSTD_getFrameContentSize(data, len(data))
    if size in (_CONTENTSIZE_UNKNOWN, _CONTENTSIZE_ERROR):
        if expected_size is None:
            raise ZstdError("frame content size unavailable")
        size = expected_size
    if expected_size is not None and size != expected_size:
        raise ZstdError(f"frame declares {size} bytes, expected {expected_size}")
    dst = ctypes.create_string_buffer(int(size)) if size else ctypes.create_string_buffer(1)
    n = _lib.ZSTD_decompress(dst, int(size), data, len(data))
    if _lib.ZSTD_isError(n):
        raise ZstdError("decompression failed (corrupt or truncated frame)")
    return dst.raw[:n]
