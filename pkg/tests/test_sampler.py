import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokenbridge.core import SampleSource, SystemConfig, VideoMetadata
from tokenbridge.sampler import BadCount, InvalidMetadata, select_frames, uniform_subsample


def meta_with(frame_count, fps, keyframes):
    return VideoMetadata(frame_count, fps, tuple(keyframes), frame_count / fps)


def oracle_select(meta, n_min, n_max):
    """Direct transliteration of the keyframe-aligned strategy, kept naive."""
    if meta.frame_count < n_min:
        return list(range(meta.frame_count)), "all"
    keys = list(meta.keyframe_indices)
    if len(keys) > n_max:
        step = (len(keys) - 1) / (n_max - 1)
        picked = [keys[math.floor(j * step + 0.5)] for j in range(n_max)]
        return picked, "subsample"
    if len(keys) < n_min:
        stride = max(1, math.floor(meta.fps + 0.5))
        idx = list(range(0, meta.frame_count, stride))
        if len(idx) > n_max:
            step = (len(idx) - 1) / (n_max - 1)
            idx = [idx[math.floor(j * step + 0.5)] for j in range(n_max)]
        return idx, "fallback"
    return keys, "keys"


SOURCE_OF = {
    "all": SampleSource.ALL_FRAMES,
    "subsample": SampleSource.KEYFRAME_SUBSAMPLE,
    "fallback": SampleSource.FIXED_RATE_FALLBACK,
    "keys": SampleSource.KEYFRAMES,
}


def test_short_video_takes_all_frames(cfg):
    meta = meta_with(50, 25.0, range(0, 50, 10))
    out = select_frames(meta, cfg)
    assert out.source is SampleSource.ALL_FRAMES
    assert out.indices == tuple(range(50))


def test_keyframe_subsample_worked_example():
    cfg = SystemConfig(n_min=2, n_max=6)
    meta = meta_with(90, 30.0, [0, 10, 20, 30, 40, 50, 60, 70, 80])
    out = select_frames(meta, cfg)
    assert out.source is SampleSource.KEYFRAME_SUBSAMPLE
    assert out.indices == (0, 20, 30, 50, 60, 80)


def test_fixed_rate_fallback_worked_example(cfg):
    meta = meta_with(1000, 25.0, range(0, 1000, 34))  # 30 keyframes < 64
    out = select_frames(meta, cfg)
    assert out.source is SampleSource.FIXED_RATE_FALLBACK
    assert out.indices == tuple(range(0, 1000, 25))
    assert len(out.indices) == 40  # shorter than n_min seconds: no padding


def test_all_keyframes_branch(cfg):
    keys = list(range(0, 3000, 30))  # 100 keys within [64, 512]
    meta = meta_with(3000, 30.0, keys)
    out = select_frames(meta, cfg)
    assert out.source is SampleSource.KEYFRAMES
    assert out.indices == tuple(keys)


def test_fallback_capped_at_n_max():
    cfg = SystemConfig(n_min=64, n_max=100)
    meta = meta_with(30000, 30.0, [0, 15000])  # 1000s video, 2 keys
    out = select_frames(meta, cfg)
    assert out.source is SampleSource.FIXED_RATE_FALLBACK
    assert len(out.indices) == 100
    assert out.indices[0] == 0 and out.indices[-1] < 30000


def test_degenerate_fps_uses_stride_one():
    cfg = SystemConfig(n_min=4, n_max=512)
    meta = meta_with(100, 0.5, [0])
    out = select_frames(meta, cfg)
    assert out.source is SampleSource.FIXED_RATE_FALLBACK
    assert out.indices[:3] == (0, 1, 2)


def test_invalid_metadata_rejected(cfg):
    with pytest.raises(InvalidMetadata):
        select_frames(VideoMetadata(0, 25.0, (0,), 0.0), cfg)


@pytest.mark.parametrize("frame_count", [63, 64])
def test_boundary_frame_count(frame_count):
    cfg = SystemConfig(n_min=64, n_max=512)
    meta = meta_with(frame_count, 1.0, range(frame_count))  # keys = all frames
    out = select_frames(meta, cfg)
    if frame_count < 64:
        assert out.source is SampleSource.ALL_FRAMES
    else:
        assert out.source is SampleSource.KEYFRAMES


@pytest.mark.parametrize("n_keys", [63, 64, 512, 513])
def test_boundary_keyframe_counts(n_keys):
    cfg = SystemConfig(n_min=64, n_max=512)
    frame_count = n_keys * 10
    meta = meta_with(frame_count, 10.0, range(0, frame_count, 10))
    out = select_frames(meta, cfg)
    expect, tag = oracle_select(meta, 64, 512)
    assert out.source is SOURCE_OF[tag]
    assert list(out.indices) == expect


def test_branch_agreement_with_oracle_randomized(rng):
    cfg = SystemConfig(n_min=64, n_max=512)
    for _ in range(300):
        frame_count = int(rng.integers(1, 40000))
        fps = float(rng.choice([5, 24, 25, 29.97, 30, 60]))
        if frame_count == 1:
            keys = [0]
        else:
            n_keys = int(rng.integers(1, frame_count))
            extra = rng.choice(np.arange(1, frame_count), size=min(n_keys, frame_count - 1),
                               replace=False)
            keys = [0] + sorted(int(k) for k in extra)
        meta = meta_with(frame_count, fps, keys)
        out = select_frames(meta, cfg)
        expect, tag = oracle_select(meta, 64, 512)
        assert out.source is SOURCE_OF[tag]
        assert list(out.indices) == expect
        assert all(0 <= i < frame_count for i in out.indices)


# -- uniform_subsample -----------------------------------------------------------

def test_subsample_identity():
    items = list(range(9))
    assert uniform_subsample(items, 9) == items


def test_subsample_endpoints():
    assert uniform_subsample(list(range(100)), 2) == [0, 99]


def test_subsample_worked_example():
    assert uniform_subsample(list(range(9)), 6) == [0, 2, 3, 5, 6, 8]


def test_subsample_single():
    assert uniform_subsample([7, 8, 9], 1) == [7]


def test_subsample_bad_count():
    with pytest.raises(BadCount):
        uniform_subsample([1, 2], 3)
    with pytest.raises(BadCount):
        uniform_subsample([1, 2], 0)


@settings(max_examples=200)
@given(st.integers(2, 500), st.data())
def test_subsample_strictly_increasing(n, data):
    k = data.draw(st.integers(1, n))
    items = list(range(0, 3 * n, 3))
    out = uniform_subsample(items, k)
    assert len(out) == k
    assert all(b > a for a, b in zip(out, out[1:]))
    assert set(out) <= set(items)
    if k >= 2:
        assert out[0] == items[0] and out[-1] == items[-1]
