import json

import numpy as np
import pytest

from tokenbridge.container import (
    FixtureSpec,
    MalformedContainer,
    MissingSyncTable,
    NoVideoTrack,
    SchemaError,
    SidecarMissing,
    build_fixture,
    probe_mp4,
    probe_sidecar,
    probe_video,
    read_sample_tables,
    sidecar_path,
)


def test_probe_known_fixture():
    spec = FixtureSpec(frame_count=100, timescale=30, frame_ticks=1,
                       sync_samples=(1, 31, 61, 91))
    meta = probe_mp4(build_fixture(spec))
    assert meta.frame_count == 100
    assert meta.keyframe_indices == (0, 30, 60, 90)
    assert meta.fps == pytest.approx(30.0)


def test_absent_sync_table_means_all_sync():
    spec = FixtureSpec(frame_count=12, sync_samples=None)
    meta = probe_mp4(build_fixture(spec))
    assert meta.keyframe_indices == tuple(range(12))


def test_sync_table_access_is_strict_for_table_users():
    spec = FixtureSpec(frame_count=12, sync_samples=None)
    tables = read_sample_tables(build_fixture(spec))
    with pytest.raises(MissingSyncTable):
        tables.require_sync_samples()


def test_truncated_moov_is_malformed():
    data = build_fixture(FixtureSpec(frame_count=50, sync_samples=(1, 26)))
    with pytest.raises(MalformedContainer):
        probe_mp4(data[: len(data) // 2])


def test_no_video_track():
    # audio-only: strip by building with audio and replacing the vide handler
    data = bytearray(build_fixture(FixtureSpec(frame_count=10), audio_track=True))
    data[data.index(b"vide"):data.index(b"vide") + 4] = b"text"
    with pytest.raises(NoVideoTrack):
        probe_mp4(bytes(data))


def test_probe_ignores_mdat_content():
    spec = FixtureSpec(frame_count=60, timescale=24, sync_samples=(1, 25, 49))
    normal = build_fixture(spec, mdat_fill=0xAB)
    zeroed = build_fixture(spec, mdat_fill=0x00)
    assert normal != zeroed
    assert probe_mp4(normal) == probe_mp4(zeroed)


def test_audio_track_first_is_skipped():
    spec = FixtureSpec(frame_count=30, sync_samples=(1, 11, 21))
    meta = probe_mp4(build_fixture(spec, audio_track=True))
    assert meta.frame_count == 30
    assert meta.keyframe_indices == (0, 10, 20)


def test_mdat_before_moov_layout():
    spec = FixtureSpec(frame_count=30, sync_samples=(1, 16))
    meta = probe_mp4(build_fixture(spec, mdat_first=True, free_box=True))
    assert meta.frame_count == 30


def test_variable_frame_durations():
    # two stts runs: 20 frames at 1 tick + 10 frames at 3 ticks, timescale 25
    spec = FixtureSpec(frame_count=30, timescale=25, frame_ticks=1,
                       sync_samples=(1, 11), extra_runs=((10, 3),))
    meta = probe_mp4(build_fixture(spec))
    assert meta.frame_count == 30
    assert meta.duration_s == pytest.approx((20 + 30) / 25)
    assert meta.fps == pytest.approx(30 * 25 / 50)


def _random_spec(rng) -> FixtureSpec:
    frame_count = int(rng.integers(2, 400))
    timescale = int(rng.choice([24, 25, 30, 1000, 30000]))
    frame_ticks = int(rng.integers(1, 4)) if timescale < 100 else int(rng.integers(30, 1300))
    n_keys = int(rng.integers(1, max(2, frame_count // 2)))
    keys = np.sort(rng.choice(np.arange(2, frame_count + 1), size=min(n_keys, frame_count - 1),
                              replace=False)) if frame_count > 2 else []
    sync = (1,) + tuple(int(k) for k in keys)
    return FixtureSpec(frame_count=frame_count, timescale=timescale,
                       frame_ticks=frame_ticks, sync_samples=sync)


def test_writer_reader_round_trip_randomized(rng):
    for i in range(60):
        spec = _random_spec(rng)
        blob = build_fixture(
            spec,
            audio_track=bool(rng.integers(2)),
            mdat_first=bool(rng.integers(2)),
            free_box=bool(rng.integers(2)),
        )
        meta = probe_mp4(blob)
        expect = spec.expected_metadata()
        assert meta.frame_count == expect.frame_count
        assert meta.keyframe_indices == expect.keyframe_indices
        assert meta.fps == pytest.approx(expect.fps, rel=1e-12)
        assert meta.duration_s == pytest.approx(expect.duration_s, rel=1e-12)


# -- sidecar --------------------------------------------------------------------

def test_sidecar_round_trip(tmp_path):
    video = tmp_path / "clip.mkv"
    video.write_bytes(b"not really a video")
    doc = {"frame_count": 900, "fps": 30, "keyframes": [0, 250, 600]}
    (tmp_path / "clip.mkv.meta.json").write_text(json.dumps(doc))
    meta = probe_sidecar(str(video))
    assert meta.frame_count == 900
    assert meta.fps == 30
    assert meta.keyframe_indices == (0, 250, 600)


def test_sidecar_missing(tmp_path):
    with pytest.raises(SidecarMissing):
        probe_sidecar(str(tmp_path / "nope.avi"))


def test_sidecar_keyframe_out_of_range(tmp_path):
    p = tmp_path / "v.avi.meta.json"
    p.write_text(json.dumps({"frame_count": 900, "fps": 30, "keyframes": [0, 900]}))
    with pytest.raises(SchemaError):
        probe_sidecar(str(p))


def test_sidecar_empty_keyframes(tmp_path):
    p = tmp_path / "v.avi.meta.json"
    p.write_text(json.dumps({"frame_count": 900, "fps": 30, "keyframes": []}))
    with pytest.raises(SchemaError):
        probe_sidecar(str(p))


def test_sidecar_must_contain_zero(tmp_path):
    p = tmp_path / "v.avi.meta.json"
    p.write_text(json.dumps({"frame_count": 900, "fps": 30, "keyframes": [10]}))
    with pytest.raises(SchemaError):
        probe_sidecar(str(p))


def test_probe_video_dispatch(tmp_path):
    mp4 = tmp_path / "a.mp4"
    mp4.write_bytes(build_fixture(FixtureSpec(frame_count=20)))
    assert probe_video(str(mp4)).frame_count == 20
    mkv = tmp_path / "b.mkv"
    mkv.write_bytes(b"\x1a\x45\xdf\xa3 matroska-ish")
    (tmp_path / "b.mkv.meta.json").write_text(
        json.dumps({"frame_count": 10, "fps": 5, "keyframes": [0, 5]}))
    assert probe_video(str(mkv)).frame_count == 10
    assert sidecar_path("x/y.mkv") == "x/y.mkv.meta.json"
