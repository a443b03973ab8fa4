"""Video container metadata extraction (no pixel decoding).

Native parsing is ISO BMFF (MP4/MOV) only: big-endian box walk down to the
sample tables, pulling frame count, timescale and sync samples. Everything
else (MKV, AVI, trace runs) goes through a JSON sidecar. A fixture writer
lives here too so tests and demos can fabricate containers byte-by-byte.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

from .core import VideoMetadata


class MalformedContainer(ValueError):
    pass


class NoVideoTrack(ValueError):
    pass


class MissingSyncTable(ValueError):
    """Raised by strict sample-table consumers; per ISO BMFF, an absent
    sync table means every sample is a sync sample, and probe_mp4 applies
    that convention instead of raising."""


class SidecarMissing(FileNotFoundError):
    pass


class SchemaError(ValueError):
    pass


_CONTAINERS = {b"moov", b"trak", b"mdia", b"minf", b"stbl"}


def _iter_boxes(buf: memoryview, start: int, end: int):
    """Yield (type, payload_start, payload_end) for each box in [start, end)."""
    off = start
    while off < end:
        if off + 8 > end:
            raise MalformedContainer("truncated box header")
        size = struct.unpack_from(">I", buf, off)[0]
        btype = bytes(buf[off + 4:off + 8])
        payload = off + 8
        if size == 1:
            if off + 16 > end:
                raise MalformedContainer("truncated largesize header")
            size = struct.unpack_from(">Q", buf, off + 8)[0]
            payload = off + 16
            if size < 16:
                raise MalformedContainer("largesize too small")
        elif size == 0:
            size = end - off
        elif size < 8:
            raise MalformedContainer(f"box size {size} too small")
        if off + size > end:
            raise MalformedContainer("box extends past parent")
        yield btype, payload, off + size
        off += size


def _find_boxes(buf, start, end, btype):
    return [(s, e) for t, s, e in _iter_boxes(buf, start, end) if t == btype]


def _find_one(buf, start, end, btype):
    found = _find_boxes(buf, start, end, btype)
    if not found:
        return None
    return found[0]


@dataclass(frozen=True)
class Mp4SampleTables:
    """Raw per-track sample bookkeeping, still 1-based like the container."""

    sample_count: int
    timescale: int
    sync_sample_indices: tuple[int, ...] | None  # 1-based; None = table absent
    duration_runs: tuple[tuple[int, int], ...]   # (sample_count, delta_ticks)

    def validate(self) -> list[str]:
        errs = []
        if self.sample_count < 1:
            errs.append("sample_count must be >= 1")
        if self.timescale < 1:
            errs.append("timescale must be >= 1")
        sync = self.sync_sample_indices
        if sync is not None:
            if any(b <= a for a, b in zip(sync, sync[1:])):
                errs.append("sync samples must be strictly increasing")
            if sync and (sync[0] < 1 or sync[-1] > self.sample_count):
                errs.append("sync samples must lie in [1, sample_count]")
        if sum(c for c, _ in self.duration_runs) != self.sample_count:
            errs.append("decode-time runs must cover every sample")
        return errs

    def total_duration_ticks(self) -> int:
        return sum(c * d for c, d in self.duration_runs)

    def per_sample_durations(self) -> list[int]:
        out = []
        for count, delta in self.duration_runs:
            out.extend([delta] * count)
        return out

    def require_sync_samples(self) -> tuple[int, ...]:
        if self.sync_sample_indices is None:
            raise MissingSyncTable("container has no sync-sample table")
        return self.sync_sample_indices


def _parse_fullbox(buf, start, end):
    if start + 4 > end:
        raise MalformedContainer("truncated full box")
    version = buf[start]
    return version, start + 4


def _parse_stts(buf, start, end):
    _, off = _parse_fullbox(buf, start, end)
    (count,) = struct.unpack_from(">I", buf, off)
    off += 4
    if off + 8 * count > end:
        raise MalformedContainer("stts overruns box")
    runs = []
    for i in range(count):
        n, delta = struct.unpack_from(">II", buf, off + 8 * i)
        runs.append((n, delta))
    return tuple(runs)


def _parse_stss(buf, start, end):
    _, off = _parse_fullbox(buf, start, end)
    (count,) = struct.unpack_from(">I", buf, off)
    off += 4
    if off + 4 * count > end:
        raise MalformedContainer("stss overruns box")
    return tuple(struct.unpack_from(f">{count}I", buf, off)) if count else ()


def _parse_stsz(buf, start, end):
    _, off = _parse_fullbox(buf, start, end)
    sample_size, count = struct.unpack_from(">II", buf, off)
    if sample_size == 0 and off + 8 + 4 * count > end:
        raise MalformedContainer("stsz overruns box")
    return count


def _parse_mdhd(buf, start, end):
    version, off = _parse_fullbox(buf, start, end)
    if version == 1:
        if off + 28 > end:
            raise MalformedContainer("truncated mdhd v1")
        timescale = struct.unpack_from(">I", buf, off + 16)[0]
    else:
        if off + 16 > end:
            raise MalformedContainer("truncated mdhd")
        timescale = struct.unpack_from(">I", buf, off + 8)[0]
    return timescale


def _parse_hdlr(buf, start, end):
    _, off = _parse_fullbox(buf, start, end)
    if off + 8 > end:
        raise MalformedContainer("truncated hdlr")
    return bytes(buf[off + 4:off + 8])


def read_sample_tables(data: bytes) -> Mp4SampleTables:
    """Parse the first video track's sample tables out of an ISO BMFF file.

    Walks box headers only; never touches mdat payload bytes.
    """
    buf = memoryview(data)
    moov = _find_one(buf, 0, len(buf), b"moov")
    if moov is None:
        raise MalformedContainer("no moov box")
    for trak_s, trak_e in _find_boxes(buf, moov[0], moov[1], b"trak"):
        mdia = _find_one(buf, trak_s, trak_e, b"mdia")
        if mdia is None:
            continue
        hdlr = _find_one(buf, mdia[0], mdia[1], b"hdlr")
        if hdlr is None or _parse_hdlr(buf, *hdlr) != b"vide":
            continue
        mdhd = _find_one(buf, mdia[0], mdia[1], b"mdhd")
        minf = _find_one(buf, mdia[0], mdia[1], b"minf")
        if mdhd is None or minf is None:
            raise MalformedContainer("video track missing mdhd/minf")
        stbl = _find_one(buf, minf[0], minf[1], b"stbl")
        if stbl is None:
            raise MalformedContainer("video track missing stbl")
        timescale = _parse_mdhd(buf, *mdhd)
        if timescale < 1:
            raise MalformedContainer("mdhd timescale must be >= 1")
        stts = _find_one(buf, stbl[0], stbl[1], b"stts")
        if stts is None:
            raise MalformedContainer("video track missing stts")
        runs = _parse_stts(buf, *stts)
        stsz = _find_one(buf, stbl[0], stbl[1], b"stsz")
        count = _parse_stsz(buf, *stsz) if stsz else sum(c for c, _ in runs)
        stss = _find_one(buf, stbl[0], stbl[1], b"stss")
        sync = _parse_stss(buf, *stss) if stss else None
        tables = Mp4SampleTables(count, timescale, sync, runs)
        errs = tables.validate()
        if errs:
            raise MalformedContainer("; ".join(errs))
        return tables
    raise NoVideoTrack("no track with a vide handler")


def probe_mp4(data: bytes) -> VideoMetadata:
    """Extract VideoMetadata from MP4/MOV bytes without decoding any frame.

    Sync samples are converted to 0-based frame indices; when the sync
    table is absent every frame is a random-access point by convention.
    """
    tables = read_sample_tables(data)
    duration_ticks = tables.total_duration_ticks()
    if duration_ticks <= 0:
        raise MalformedContainer("track duration must be positive")
    if tables.sync_sample_indices is None:
        keyframes = tuple(range(tables.sample_count))
    else:
        keyframes = tuple(i - 1 for i in tables.sync_sample_indices)
    if not keyframes or keyframes[0] != 0:
        raise MalformedContainer("first sample must be a sync sample")
    fps = tables.sample_count * tables.timescale / duration_ticks
    meta = VideoMetadata(
        frame_count=tables.sample_count,
        fps=fps,
        keyframe_indices=keyframes,
        duration_s=duration_ticks / tables.timescale,
    )
    errs = meta.validate()
    if errs:
        raise MalformedContainer("; ".join(errs))
    return meta


def sidecar_path(video_path: str) -> str:
    return video_path + ".meta.json"


def probe_sidecar(path: str) -> VideoMetadata:
    """Read metadata from ``<video>.meta.json`` next to the video file."""
    meta_path = path if path.endswith(".meta.json") else sidecar_path(path)
    if not os.path.exists(meta_path):
        raise SidecarMissing(meta_path)
    with open(meta_path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"sidecar is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("sidecar must be a JSON object")
    try:
        frame_count = int(doc["frame_count"])
        fps = float(doc["fps"])
        keyframes = tuple(int(k) for k in doc["keyframes"])
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"sidecar missing or mistyped field: {e}") from e
    meta = VideoMetadata(frame_count, fps, keyframes, frame_count / fps if fps > 0 else 0.0)
    errs = meta.validate()
    if errs:
        raise SchemaError("; ".join(errs))
    return meta


def probe_video(path: str) -> VideoMetadata:
    """Probe an on-disk video: native ISO BMFF when recognized, sidecar otherwise."""
    if not path.endswith(".meta.json") and os.path.exists(path):
        with open(path, "rb") as f:
            head = f.read(12)
        if len(head) >= 8 and head[4:8] in (b"ftyp", b"moov", b"mdat", b"free", b"wide"):
            with open(path, "rb") as f:
                return probe_mp4(f.read())
    return probe_sidecar(path)


# ---------------------------------------------------------------------------
# Fixture writer: fabricates minimal-but-real ISO BMFF files for tests/demos.

def _box(btype: bytes, payload: bytes) -> bytes:
    return struct.pack(">I", 8 + len(payload)) + btype + payload


def _fullbox(btype: bytes, version: int, flags: int, payload: bytes) -> bytes:
    return _box(btype, struct.pack(">B", version) + flags.to_bytes(3, "big") + payload)


@dataclass(frozen=True)
class FixtureSpec:
    """Exact sample-table content for a synthetic MP4.

    fps is rational by construction: frame_count * timescale / total ticks.
    """

    frame_count: int
    timescale: int = 30
    frame_ticks: int = 1
    sync_samples: tuple[int, ...] | None = (1,)  # 1-based; None omits stss
    extra_runs: tuple[tuple[int, int], ...] = ()  # appended stts runs

    def duration_runs(self) -> tuple[tuple[int, int], ...]:
        extra = sum(c for c, _ in self.extra_runs)
        if extra > self.frame_count:
            raise ValueError("extra stts runs exceed frame count")
        runs = ()
        if self.frame_count - extra:
            runs = ((self.frame_count - extra, self.frame_ticks),)
        return runs + self.extra_runs

    def expected_metadata(self) -> VideoMetadata:
        ticks = sum(c * d for c, d in self.duration_runs())
        if self.sync_samples is None:
            keys = tuple(range(self.frame_count))
        else:
            keys = tuple(i - 1 for i in self.sync_samples)
        return VideoMetadata(
            frame_count=self.frame_count,
            fps=self.frame_count * self.timescale / ticks,
            keyframe_indices=keys,
            duration_s=ticks / self.timescale,
        )


def _stbl(spec: FixtureSpec, sample_sizes: list[int]) -> bytes:
    avc1 = _box(b"avc1", bytes(78))
    stsd = _fullbox(b"stsd", 0, 0, struct.pack(">I", 1) + avc1)
    runs = spec.duration_runs()
    stts = _fullbox(b"stts", 0, 0, struct.pack(">I", len(runs))
                    + b"".join(struct.pack(">II", c, d) for c, d in runs))
    stsz = _fullbox(b"stsz", 0, 0, struct.pack(">II", 0, spec.frame_count)
                    + struct.pack(f">{spec.frame_count}I", *sample_sizes))
    stsc = _fullbox(b"stsc", 0, 0, struct.pack(">I", 1) + struct.pack(">III", 1, spec.frame_count, 1))
    stco = _fullbox(b"stco", 0, 0, struct.pack(">I", 1) + struct.pack(">I", 0))
    parts = stsd + stts
    if spec.sync_samples is not None:
        parts += _fullbox(b"stss", 0, 0, struct.pack(">I", len(spec.sync_samples))
                          + struct.pack(f">{len(spec.sync_samples)}I", *spec.sync_samples))
    parts += stsz + stsc + stco
    return _box(b"stbl", parts)


def _video_trak(spec: FixtureSpec, sample_sizes: list[int]) -> bytes:
    ticks = sum(c * d for c, d in spec.duration_runs())
    tkhd = _fullbox(b"tkhd", 0, 7, bytes(8) + struct.pack(">I", 1) + bytes(68))
    mdhd = _fullbox(b"mdhd", 0, 0, struct.pack(">IIII", 0, 0, spec.timescale, ticks)
                    + struct.pack(">HH", 0x55C4, 0))
    hdlr = _fullbox(b"hdlr", 0, 0, bytes(4) + b"vide" + bytes(12) + b"VideoHandler\x00")
    vmhd = _fullbox(b"vmhd", 0, 1, bytes(8))
    dref = _fullbox(b"dref", 0, 0, struct.pack(">I", 1) + _fullbox(b"url ", 0, 1, b""))
    dinf = _box(b"dinf", dref)
    minf = _box(b"minf", vmhd + dinf + _stbl(spec, sample_sizes))
    mdia = _box(b"mdia", mdhd + hdlr + minf)
    return _box(b"trak", tkhd + mdia)


def _audio_trak() -> bytes:
    mdhd = _fullbox(b"mdhd", 0, 0, struct.pack(">IIII", 0, 0, 44100, 44100) + struct.pack(">HH", 0x55C4, 0))
    hdlr = _fullbox(b"hdlr", 0, 0, bytes(4) + b"soun" + bytes(12) + b"SoundHandler\x00")
    stts = _fullbox(b"stts", 0, 0, struct.pack(">I", 1) + struct.pack(">II", 1, 44100))
    stsz = _fullbox(b"stsz", 0, 0, struct.pack(">III", 0, 1, 16))
    stbl = _box(b"stbl", stts + stsz)
    smhd = _fullbox(b"smhd", 0, 0, bytes(4))
    minf = _box(b"minf", smhd + stbl)
    mdia = _box(b"mdia", mdhd + hdlr + minf)
    return _box(b"trak", _fullbox(b"tkhd", 0, 7, bytes(8) + struct.pack(">I", 2) + bytes(68)) + mdia)


def build_fixture(
    spec: FixtureSpec,
    *,
    audio_track: bool = False,
    mdat_first: bool = False,
    free_box: bool = False,
    mdat_fill: int = 0,
) -> bytes:
    """Write a complete synthetic MP4 whose metadata is spec.expected_metadata().

    Sample payloads are synthetic filler; keyframe samples are written a
    little larger, the way real encoders behave.
    """
    keyset = set(spec.sync_samples or range(1, spec.frame_count + 1))
    sizes = [48 if (i + 1) in keyset else 16 for i in range(spec.frame_count)]
    mdat = _box(b"mdat", bytes([mdat_fill & 0xFF]) * sum(sizes))
    mvhd = _fullbox(b"mvhd", 0, 0, struct.pack(">IIII", 0, 0, 1000,
                    int(1000 * spec.frame_count * spec.frame_ticks / spec.timescale)) + bytes(80))
    traks = _video_trak(spec, sizes)
    if audio_track:
        traks = _audio_trak() + traks
    moov = _box(b"moov", mvhd + traks)
    ftyp = _box(b"ftyp", b"isom" + struct.pack(">I", 512) + b"isomiso2avc1mp41")
    parts = [ftyp]
    if free_box:
        parts.append(_box(b"free", b"\x00" * 24))
    parts.extend([mdat, moov] if mdat_first else [moov, mdat])
    return b"".join(parts)
