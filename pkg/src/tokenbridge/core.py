"""Shared domain types and system configuration.

Everything in this module is an immutable value type; instances can be
shared freely across threads. Each type serializes to plain dicts via
``to_dict`` / ``from_dict`` so that JSON round-trips are the identity.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, fields, replace

import numpy as np

OPTION_LETTERS = "ABCDEF"
DEFAULT_ACTIONS = (2, 4, 8, 16, 32)

ENV_PREFIX = "TB_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Query:
    """One unit of service: a video reference plus a multiple-choice question."""

    id: str
    video: str
    question: str
    options: tuple[str, ...]

    def validate(self) -> list[str]:
        errs = []
        if not self.question:
            errs.append("question must be non-empty")
        if not (2 <= len(self.options) <= 6):
            errs.append("options must have 2..6 entries")
        if len(set(self.options)) != len(self.options):
            errs.append("options must be unique")
        for o in self.options:
            if o not in OPTION_LETTERS:
                errs.append(f"option {o!r} not in {OPTION_LETTERS!r}")
        return errs

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "video": self.video,
            "question": self.question,
            "options": list(self.options),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Query":
        return cls(d["id"], d["video"], d["question"], tuple(d["options"]))


@dataclass(frozen=True)
class VideoMetadata:
    """Container-level facts about a video; no pixels involved."""

    frame_count: int
    fps: float
    keyframe_indices: tuple[int, ...]
    duration_s: float

    def validate(self) -> list[str]:
        errs = []
        if self.frame_count < 1:
            errs.append("frame_count must be >= 1")
        if not self.fps > 0:
            errs.append("fps must be > 0")
        keys = self.keyframe_indices
        if not keys:
            errs.append("keyframe_indices must be non-empty")
        else:
            if keys[0] != 0:
                errs.append("keyframe_indices must start at 0")
            if any(b <= a for a, b in zip(keys, keys[1:])):
                errs.append("keyframe_indices must be strictly increasing")
            if keys[-1] >= self.frame_count:
                errs.append("keyframe_indices must be < frame_count")
        if self.fps > 0 and abs(self.duration_s - self.frame_count / self.fps) > 1.0 / self.fps + 1e-9:
            errs.append("duration_s inconsistent with frame_count/fps")
        return errs

    def to_dict(self) -> dict:
        return {
            "frame_count": self.frame_count,
            "fps": self.fps,
            "keyframe_indices": list(self.keyframe_indices),
            "duration_s": self.duration_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VideoMetadata":
        return cls(d["frame_count"], d["fps"], tuple(d["keyframe_indices"]), d["duration_s"])


class SampleSource(enum.Enum):
    ALL_FRAMES = "AllFrames"
    KEYFRAMES = "Keyframes"
    KEYFRAME_SUBSAMPLE = "KeyframeSubsample"
    FIXED_RATE_FALLBACK = "FixedRateFallback"


@dataclass(frozen=True)
class SampleIndices:
    indices: tuple[int, ...]
    source: SampleSource

    def __len__(self) -> int:
        return len(self.indices)

    def validate(self, frame_count: int) -> list[str]:
        errs = []
        if not self.indices:
            errs.append("indices must be non-empty")
            return errs
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            errs.append("indices must be strictly increasing")
        if self.indices[0] < 0 or self.indices[-1] >= frame_count:
            errs.append("indices must lie in [0, frame_count)")
        return errs

    def to_dict(self) -> dict:
        return {"indices": list(self.indices), "source": self.source.value}

    @classmethod
    def from_dict(cls, d: dict) -> "SampleIndices":
        return cls(tuple(d["indices"]), SampleSource(d["source"]))


@dataclass(frozen=True, eq=False)
class TokenTensor:
    """Vision tokens shaped frames x tokens_per_frame x dim, 32-bit floats.

    ``tokens_per_frame`` is the retained per-frame density for merged
    tensors, or the raw count straight out of the encoder. ``flags``
    records lossy bookkeeping such as uneven merge grouping.
    """

    frames: int
    tokens_per_frame: int
    dim: int
    data: np.ndarray
    clip_size: int = 4
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.shape != (self.frames, self.tokens_per_frame, self.dim):
            arr = arr.reshape(self.frames, self.tokens_per_frame, self.dim)
        object.__setattr__(self, "data", arr)

    def validate(self) -> list[str]:
        errs = []
        if self.frames < 1 or self.tokens_per_frame < 1 or self.dim < 1:
            errs.append("shape fields must be >= 1")
        if self.data.size != self.frames * self.tokens_per_frame * self.dim:
            errs.append("data length must match shape product")
        if not np.isfinite(self.data).all():
            errs.append("data must be finite")
        if self.clip_size < 1:
            errs.append("clip_size must be >= 1")
        return errs

    @property
    def n_clips(self) -> int:
        return -(-self.frames // self.clip_size)

    def rows(self) -> np.ndarray:
        """All token embeddings as a (frames*tokens_per_frame, dim) view."""
        return self.data.reshape(self.frames * self.tokens_per_frame, self.dim)

    def clip_of_token(self, j: int) -> int:
        return (j // self.tokens_per_frame) // self.clip_size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TokenTensor):
            return NotImplemented
        return (
            self.frames == other.frames
            and self.tokens_per_frame == other.tokens_per_frame
            and self.dim == other.dim
            and self.clip_size == other.clip_size
            and self.flags == other.flags
            and np.array_equal(self.data, other.data)
        )

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "tokens_per_frame": self.tokens_per_frame,
            "dim": self.dim,
            "clip_size": self.clip_size,
            "flags": list(self.flags),
            "data": [float(x) for x in self.data.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TokenTensor":
        data = np.asarray(d["data"], dtype=np.float32).reshape(
            d["frames"], d["tokens_per_frame"], d["dim"]
        )
        return cls(
            d["frames"], d["tokens_per_frame"], d["dim"], data,
            clip_size=d.get("clip_size", 4), flags=tuple(d.get("flags", ())),
        )


@dataclass(frozen=True)
class LogitVector:
    """Raw logits for the valid option letters, aligned with Query.options.

    This is the slice of the model's full-vocabulary output restricted to
    the option tokens; nothing else of the vocabulary survives.
    """

    values: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"values": list(self.values)}

    @classmethod
    def from_dict(cls, d: dict) -> "LogitVector":
        return cls(tuple(d["values"]))


@dataclass(frozen=True)
class CalibratedDistribution:
    """Per-option probabilities plus the summaries the router and bandit use."""

    probs: tuple[float, ...]
    confidence: float
    margin: float
    entropy_norm: float
    temperature: float

    def argmax(self) -> int:
        return int(np.argmax(self.probs))

    def validate(self) -> list[str]:
        errs = []
        if abs(sum(self.probs) - 1.0) > 1e-6:
            errs.append("probs must sum to 1")
        if abs(self.confidence - max(self.probs)) > 1e-9:
            errs.append("confidence must equal max(probs)")
        if not 0.0 <= self.margin <= 1.0:
            errs.append("margin must be in [0,1]")
        if not -1e-9 <= self.entropy_norm <= 1.0 + 1e-9:
            errs.append("entropy_norm must be in [0,1]")
        if not self.temperature > 0:
            errs.append("temperature must be > 0")
        return errs

    def to_dict(self) -> dict:
        return {
            "probs": list(self.probs),
            "confidence": self.confidence,
            "margin": self.margin,
            "entropy_norm": self.entropy_norm,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedDistribution":
        return cls(
            tuple(d["probs"]), d["confidence"], d["margin"],
            d["entropy_norm"], d["temperature"],
        )


@dataclass(frozen=True)
class DelayBreakdown:
    """Per-query wall-clock accounting, milliseconds."""

    decode_sample_ms: float = 0.0
    encode_ms: float = 0.0
    local_lm_ms: float = 0.0
    decision_ms: float = 0.0
    merge_compress_ms: float = 0.0
    network_ms: float = 0.0
    edge_lm_ms: float = 0.0
    total_ms: float = 0.0

    _COMPONENTS = (
        "decode_sample_ms", "encode_ms", "local_lm_ms", "decision_ms",
        "merge_compress_ms", "network_ms", "edge_lm_ms",
    )

    def sum_components(self) -> float:
        return sum(getattr(self, name) for name in self._COMPONENTS)

    def validate(self) -> list[str]:
        errs = []
        for name in self._COMPONENTS + ("total_ms",):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be >= 0")
        if abs(self.total_ms - self.sum_components()) > 1.0:
            errs.append("total_ms must equal the component sum within 1 ms")
        return errs

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self._COMPONENTS + ("total_ms",)}

    @classmethod
    def from_dict(cls, d: dict) -> "DelayBreakdown":
        return cls(**d)


# Token density actions are plain ints; an action set is an ordered tuple.
Action = int


def validate_actions(actions: tuple[int, ...], raw_tokens_per_frame: int | None = None) -> list[str]:
    errs = []
    if not actions:
        errs.append("actions must be non-empty")
        return errs
    if any(a < 1 for a in actions):
        errs.append("actions must be >= 1")
    if any(b <= a for a, b in zip(actions, actions[1:])):
        errs.append("actions must be strictly increasing")
    if raw_tokens_per_frame is not None and actions[-1] > raw_tokens_per_frame:
        errs.append("actions must not exceed raw tokens per frame")
    return errs


@dataclass(frozen=True)
class SystemConfig:
    """All tunables in one flat record.

    The default trade-off weight normalizes the maximum possible offloaded
    token volume (n_max frames x densest action) to a cost of exactly 1.0.
    """

    n_min: int = 64
    n_max: int = 512
    tau_route: float = 0.6
    tau_proxy: float = 0.6
    lambda_tradeoff: float = 1.0 / 16384.0
    lambda0: float = 0.1
    alpha_ts: float = 0.05
    pca_dim: int = 4
    top_clips: int = 3
    clip_size: int = 4
    actions: tuple[int, ...] = DEFAULT_ACTIONS
    up_mbps: float = 59.0
    down_mbps: float = 119.0
    rtt_ms: float = 9.0
    queue_capacity: int = 2
    offload_timeout_s: float = 120.0
    extractor_lr: float = 1e-3
    extractor_epochs: int = 200
    extractor_batch: int = 64
    seed: int = 0

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["actions"] = list(self.actions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        d = dict(d)
        if "actions" in d:
            d["actions"] = tuple(d["actions"])
        return cls(**d)


def validate_config(cfg: SystemConfig) -> list[str]:
    """Return every violated invariant; an empty list means the config is OK."""
    errs = []
    if cfg.n_min < 1:
        errs.append("n_min must be >= 1")
    if cfg.n_max < cfg.n_min:
        errs.append("n_max must be >= n_min")
    for name in ("tau_route", "tau_proxy"):
        v = getattr(cfg, name)
        if not 0.0 < v < 1.0:
            errs.append(f"{name} out of (0,1)")
    for name in ("lambda_tradeoff", "lambda0", "up_mbps", "down_mbps",
                 "offload_timeout_s", "extractor_lr"):
        if not getattr(cfg, name) > 0:
            errs.append(f"{name} must be > 0")
    if cfg.alpha_ts < 0:
        errs.append("alpha_ts must be >= 0")
    if cfg.rtt_ms < 0:
        errs.append("rtt_ms must be >= 0")
    for name in ("pca_dim", "top_clips", "clip_size", "queue_capacity",
                 "extractor_epochs", "extractor_batch"):
        if getattr(cfg, name) < 1:
            errs.append(f"{name} must be >= 1")
    errs.extend(validate_actions(cfg.actions))
    return errs


def _coerce(name: str, raw: str, kind: type):
    raw = raw.strip()
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{name}: cannot parse {raw!r} as bool")
    if kind is tuple:
        return tuple(int(x) for x in raw.replace(",", " ").split())
    return raw.strip('"')


def parse_config_text(text: str, base: SystemConfig | None = None) -> SystemConfig:
    """Parse a flat ``key = value`` document into a SystemConfig."""
    cfg = base or SystemConfig()
    kinds = {f.name: (tuple if f.name == "actions" else type(getattr(cfg, f.name)))
             for f in fields(cfg)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            updates[key] = _coerce(key, raw, kinds[key])
        except (ValueError, TypeError) as e:
            raise ConfigError(f"line {lineno}: {key}: {e}") from e
    return replace(cfg, **updates)


def load_config(path: str | None = None, env: dict | None = None) -> SystemConfig:
    """Load config from an optional file, then apply TB_* environment overrides."""
    cfg = SystemConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            cfg = parse_config_text(f.read(), cfg)
    env = os.environ if env is None else env
    kinds = {f.name: (tuple if f.name == "actions" else type(getattr(cfg, f.name)))
             for f in fields(cfg)}
    updates = {}
    for name, kind in kinds.items():
        key = ENV_PREFIX + name.upper()
        if key in env:
            updates[name] = _coerce(name, env[key], kind)
    if updates:
        cfg = replace(cfg, **updates)
    return cfg
