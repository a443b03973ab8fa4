"""Keyframe-aligned frame selection with fixed-rate fallback.

Selection stays glued to the container's random-access points whenever
possible, so decoding never has to chew through unreferenced GOP frames.
"""

from __future__ import annotations

import math

from .core import SampleIndices, SampleSource, SystemConfig, VideoMetadata


class InvalidMetadata(ValueError):
    pass


class BadCount(ValueError):
    pass


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def uniform_subsample(items: list[int] | tuple[int, ...], k: int) -> list[int]:
    """Pick k evenly spaced entries, always keeping the first and last.

    Positions are round-half-up of j*(len-1)/(k-1); with k <= len the
    position map has slope >= 1, so the picks are strictly increasing.
    """
    n = len(items)
    if k < 1 or k > n:
        raise BadCount(f"need 1 <= k <= {n}, got {k}")
    if k == 1:
        return [items[0]]
    step = (n - 1) / (k - 1)
    return [items[_round_half_up(j * step)] for j in range(k)]


def select_frames(meta: VideoMetadata, cfg: SystemConfig) -> SampleIndices:
    """Choose frame indices per the keyframe-aligned strategy.

    Branches, in order: short videos take every frame; dense keyframe sets
    are uniformly thinned to n_max; sparse keyframe sets fall back to
    1 FPS fixed-rate sampling; otherwise all keyframes are used verbatim.
    The fixed-rate list is capped at n_max but never padded up to n_min,
    so clips shorter than n_min seconds yield fewer frames.
    """
    errs = meta.validate()
    if errs:
        raise InvalidMetadata("; ".join(errs))
    if cfg.n_min > cfg.n_max:
        raise InvalidMetadata("n_min must be <= n_max")

    if meta.frame_count < cfg.n_min:
        return SampleIndices(tuple(range(meta.frame_count)), SampleSource.ALL_FRAMES)

    keys = meta.keyframe_indices
    if len(keys) > cfg.n_max:
        picked = uniform_subsample(keys, cfg.n_max)
        return SampleIndices(tuple(picked), SampleSource.KEYFRAME_SUBSAMPLE)
    if len(keys) < cfg.n_min:
        stride = max(1, _round_half_up(meta.fps))
        indices = list(range(0, meta.frame_count, stride))
        if len(indices) > cfg.n_max:
            indices = uniform_subsample(indices, cfg.n_max)
        return SampleIndices(tuple(indices), SampleSource.FIXED_RATE_FALLBACK)
    return SampleIndices(keys, SampleSource.KEYFRAMES)
