"""Pluggable stand-ins for the small and large models.

The synthetic backend draws answers from controllable statistics: a
per-query hidden difficulty drives both models' success probabilities, a
confidence is drawn so that (at miscalibration factor 1) reported
confidence matches empirical accuracy by construction, and a coupling
knob reproduces a target small/large answer-agreement rate. The trace
backend replays recorded model outputs verbatim.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _zstd
from .core import LogitVector, Query, TokenTensor

TRACE_SCHEMA = "tb-trace-v1"


class MissingRecord(KeyError):
    pass


class Role(enum.Enum):
    SMALL = "small"
    LARGE = "large"


@dataclass(frozen=True)
class BackendResponse:
    """One model invocation result; embeddings only ride along for the small role."""

    logits: LogitVector
    sim_ms: float
    h_txt: np.ndarray | None = None
    h_vis: np.ndarray | None = None
    ground_truth_index: int | None = None  # synthetic/trace only, test-visible
    correct: bool | None = None


def _qhash(qid: str) -> int:
    return int.from_bytes(hashlib.blake2b(qid.encode(), digest_size=8).digest(), "little")


@dataclass
class SyntheticProfile:
    """Statistical surface of a synthetic small/large model pair.

    Difficulty delta drives the reasoning load (both accuracies fall with
    it); an independent visual-complexity variable decides which token
    density a query actually needs, producing the per-query optimum the
    density curve peaks around. The marginal curve over all queries keeps
    its peak at ``peak_density``'s level within one step.
    """

    n_options: int = 4
    small_acc: tuple[float, float] = (0.85, 0.35)   # f_S at delta=0 and delta=1
    large_acc: tuple[float, float] = (0.95, 0.65)   # base of g at delta=0 and delta=1
    density_curve: str = "inverted_u"               # or "monotone"
    peak_density: int = 16
    # fraction of queries whose own optimum sits at peak, peak/2, peak/4
    peak_split: tuple[float, float, float] = (1.0, 0.0, 0.0)
    curve_drop: float = 0.08                        # accuracy lost per log2-step^2
    native_bonus: float = 0.01                      # native large model vs shared-encoder
    gamma: float = 1.0                              # logit sharpening (miscalibration)
    agreement_target: float | None = None
    beta_concentration: float = 12.0
    embed_dim: int = 32
    raw_tokens_per_frame: int = 32
    small_density: int = 16
    native_density: int = 16
    actions: tuple[int, ...] = (2, 4, 8, 16, 32)
    coupling: float = field(default=0.5)

    def __post_init__(self):
        if abs(sum(self.peak_split) - 1.0) > 1e-9:
            raise ValueError("peak_split must sum to 1")
        if self.agreement_target is not None:
            self.coupling = self._solve_coupling(self.agreement_target)

    # hidden per-query state -------------------------------------------------

    def hidden(self, qid: str, seed: int) -> dict:
        rng = np.random.default_rng([seed & 0x7FFFFFFF, _qhash(qid)])
        delta = float(rng.uniform())
        psi = float(rng.uniform())
        gt = int(rng.integers(self.n_options))
        v = float(rng.uniform())
        coupled = bool(rng.uniform() < self.coupling)
        wrong_perm = tuple(int(x) for x in rng.permutation(self.n_options - 1))
        return {"delta": delta, "psi": psi, "gt": gt, "v": v,
                "coupled": coupled, "wrong_perm": wrong_perm}

    def f_small(self, delta: float) -> float:
        hi, lo = self.small_acc
        return float(np.clip(hi - (hi - lo) * delta, 0.02, 0.998))

    def query_peak(self, psi: float) -> int:
        w_peak, w_half, _ = self.peak_split
        if psi < w_peak:
            return self.peak_density
        if psi < w_peak + w_half:
            return max(1, self.peak_density // 2)
        return max(1, self.peak_density // 4)

    def g_large(self, delta: float, psi: float, density: int) -> float:
        hi, lo = self.large_acc
        base = hi - (hi - lo) * delta
        if self.density_curve == "monotone":
            drop = self.curve_drop * (math.log2(max(self.actions)) - math.log2(density))
        else:
            peak = self.query_peak(psi)
            drop = self.curve_drop * (math.log2(density) - math.log2(peak)) ** 2
        return float(np.clip(base - drop, 0.02, 0.998))

    def g_native(self, delta: float) -> float:
        hi, lo = self.large_acc
        return float(np.clip(hi - (hi - lo) * delta + self.native_bonus, 0.02, 0.998))

    # calibrated-by-construction response drawing ----------------------------

    def _draw_top_prob(self, mean: float, rng) -> float:
        lo = 1.0 / self.n_options + 2e-3
        mean = float(np.clip(mean, lo + 1e-3, 0.998))
        nu = self.beta_concentration
        p = rng.beta(mean * nu, (1.0 - mean) * nu)
        return float(np.clip(p, lo, 1.0 - 1e-4))

    def _slot_probs(self, p_top: float, rng) -> np.ndarray:
        """Probability mass per abstract slot; slot 0 is the model's argmax."""
        m = self.n_options - 1
        w = rng.dirichlet(np.ones(m))
        cap = (p_top - 1e-3) / max(1e-12, 1.0 - p_top)
        u = 1.0 / m
        w_max = float(w.max())
        if w_max > cap and w_max > u:
            lam = max(0.0, (cap - u) / (w_max - u))
            w = lam * w + (1 - lam) * u
            w = w / w.sum()
        return np.concatenate([[p_top], (1.0 - p_top) * w])

    def response(self, qid: str, role: Role, density: int | None, seed: int,
                 sim_ms: float = 0.0, native: bool = False) -> BackendResponse:
        """Deterministic synthetic model output for (seed, query, role, density).

        The ground-truth option is placed on a probability slot by
        inverting the emitted distribution's CDF at a uniform draw, so
        labels follow the distribution exactly and (at gamma 1) reported
        probabilities are calibrated by construction. Coupled queries
        share the uniform and the slot-to-option assignment across model
        roles, which is what produces small/large answer agreement.
        ``native`` means the large model ran its own full pipeline (no
        shared tokens), so the density curve does not apply.
        """
        h = self.hidden(qid, seed)
        if role is Role.SMALL:
            sub = np.random.default_rng([seed & 0x7FFFFFFF, _qhash(qid), 1])
            q = self.f_small(h["delta"])
        elif native:
            sub = np.random.default_rng([seed & 0x7FFFFFFF, _qhash(qid), 5])
            q = self.g_native(h["delta"])
        else:
            d = self.native_density if density is None else density
            sub = np.random.default_rng([seed & 0x7FFFFFFF, _qhash(qid), 2, d])
            q = self.g_large(h["delta"], h["psi"], d)
        p_top = self._draw_top_prob(q, sub)
        slots = self._slot_probs(p_top, sub)
        v = h["v"] if h["coupled"] else float(sub.uniform())
        truth_slot = int(np.searchsorted(np.cumsum(slots), v, side="right"))
        truth_slot = min(truth_slot, self.n_options - 1)
        correct = truth_slot == 0

        # assign option identities to slots: truth slot gets gt, the rest
        # follow a permutation of the remaining options (shared when coupled)
        others = [o for o in range(self.n_options) if o != h["gt"]]
        if h["coupled"]:
            perm = list(h["wrong_perm"])
        else:
            perm = list(sub.permutation(len(others)))
        assignment = np.empty(self.n_options, dtype=np.int64)
        rest_slots = [s for s in range(self.n_options) if s != truth_slot]
        assignment[truth_slot] = h["gt"]
        for s, pi in zip(rest_slots, perm):
            assignment[s] = others[pi]
        probs = np.empty(self.n_options)
        probs[assignment] = slots
        z = self.gamma * np.log(probs) + sub.normal(0.0, 0.5)
        h_txt = self.text_embedding(qid, seed) if role is Role.SMALL else None
        return BackendResponse(
            logits=LogitVector(tuple(float(x) for x in z)),
            sim_ms=sim_ms,
            h_txt=h_txt,
            ground_truth_index=h["gt"],
            correct=bool(correct),
        )

    # synthetic embeddings and tokens ----------------------------------------

    def text_embedding(self, qid: str, seed: int) -> np.ndarray:
        h = self.hidden(qid, seed)
        rng = np.random.default_rng([seed & 0x7FFFFFFF, _qhash(qid), 3])
        D = self.embed_dim
        e = rng.normal(0.0, 0.3, D)
        e[0] += h["delta"] * 2.0   # question difficulty leaks into phrasing
        e[1] += h["psi"] * 1.0
        return e

    def raw_tokens(self, qid: str, seed: int, n_frames: int, clip_size: int = 4) -> TokenTensor:
        """Raw vision tokens whose clip spectra track the query's visual complexity."""
        h = self.hidden(qid, seed)
        rng = np.random.default_rng([seed & 0x7FFFFFFF, _qhash(qid), 4])
        D = self.embed_dim
        tpf = self.raw_tokens_per_frame
        J = min(clip_size * tpf, D)
        rank = max(1, int(round(1 + h["psi"] * (J - 1))))
        basis = rng.normal(0.0, 1.0, (rank, D))
        mix = rng.normal(0.0, 1.0, (n_frames * tpf, rank))
        data = (mix @ basis) / math.sqrt(rank)
        data[:, 2] += h["psi"]      # pooled vision embedding carries psi
        data[:, 3] += h["delta"] * 0.5
        data = data.reshape(n_frames, tpf, D).astype(np.float32)
        return TokenTensor(n_frames, tpf, D, data, clip_size=clip_size)

    # agreement calibration ---------------------------------------------------

    def _measure_agreement(self, coupling: float, n: int = 6000, seed: int = 97) -> float:
        saved = self.coupling
        self.coupling = coupling
        agree = 0
        for i in range(n):
            qid = f"cal{i}"
            s = self.response(qid, Role.SMALL, None, seed)
            l = self.response(qid, Role.LARGE, self.native_density, seed)
            a_s = int(np.argmax(s.logits.values))
            a_l = int(np.argmax(l.logits.values))
            agree += a_s == a_l
        self.coupling = saved
        return agree / n

    def _solve_coupling(self, target: float) -> float:
        # each query is coupled with probability rho, so expected agreement
        # is linear in rho; two endpoint measurements pin the line down
        a0 = self._measure_agreement(0.0)
        a1 = self._measure_agreement(1.0)
        if a1 <= a0:
            return 1.0
        return float(np.clip((target - a0) / (a1 - a0), 0.0, 1.0))


def synthetic_answer(profile: SyntheticProfile, query: Query, role: Role,
                     density: int | None, seed: int, sim_ms: float = 0.0) -> BackendResponse:
    """Functional wrapper over SyntheticProfile.response keyed by query id."""
    return profile.response(query.id, role, density, seed, sim_ms=sim_ms)


# ---------------------------------------------------------------------------
# Trace replay

def _record_key(rec: dict):
    d = rec.get("density")
    return (rec["qid"], rec["role"], None if d is None else int(d))


def validate_trace_record(rec: dict) -> list[str]:
    errs = []
    for k in ("qid", "role", "options", "logits", "n_frames", "t_ms"):
        if k not in rec:
            errs.append(f"missing field {k}")
    if errs:
        return errs
    if rec["role"] not in ("small", "large"):
        errs.append(f"bad role {rec['role']!r}")
    if not isinstance(rec["options"], list) or not rec["options"]:
        errs.append("options must be a non-empty list")
    elif len(rec.get("logits", [])) != len(rec["options"]):
        errs.append("logits length must match options")
    if rec.get("gt") is not None and rec["gt"] not in rec["options"]:
        errs.append("gt must be one of the options")
    if rec["role"] == "small":
        if "h_txt" not in rec or not rec["h_txt"]:
            errs.append("small records need h_txt")
        hv = rec.get("h_vis")
        if hv:
            width = {len(row) for row in hv}
            if len(width) != 1:
                errs.append("h_vis rows must have equal width")
            elif rec["n_frames"] and len(hv) % rec["n_frames"] != 0:
                errs.append("h_vis rows must divide evenly into frames")
    return errs


def read_trace(path: str) -> dict:
    """Load a JSON-lines trace, optionally Zstandard-compressed (.zst)."""
    with open(path, "rb") as f:
        blob = f.read()
    if path.endswith(".zst"):
        blob = _zstd.decompress(blob)
    records = {}
    for line in blob.decode("utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if "qid" not in rec:
            continue  # header / schema line
        errs = validate_trace_record(rec)
        if errs:
            raise ValueError(f"invalid trace record {rec.get('qid')}: {'; '.join(errs)}")
        records[_record_key(rec)] = rec
    return records


def write_trace(path: str, records: list[dict], header: dict | None = None) -> None:
    lines = [json.dumps(header or {"schema": TRACE_SCHEMA})]
    lines.extend(json.dumps(r) for r in records)
    blob = ("\n".join(lines) + "\n").encode("utf-8")
    if path.endswith(".zst"):
        blob = _zstd.compress(blob)
    with open(path, "wb") as f:
        f.write(blob)


class TraceBackend:
    """Replay recorded model outputs keyed by (query, role, density)."""

    def __init__(self, records: dict | str):
        self.records = read_trace(records) if isinstance(records, (str, os.PathLike)) else records

    def answer(self, qid: str, role: Role, density: int | None) -> BackendResponse:
        key = (qid, role.value, density)
        if key not in self.records:
            raise MissingRecord(f"no trace record for {key}")
        rec = self.records[key]
        h_txt = np.asarray(rec["h_txt"], dtype=np.float64) if rec.get("h_txt") else None
        h_vis = np.asarray(rec["h_vis"], dtype=np.float64) if rec.get("h_vis") else None
        gt = rec.get("gt")
        gt_idx = rec["options"].index(gt) if gt is not None else None
        correct = None
        if gt_idx is not None:
            correct = int(np.argmax(rec["logits"])) == gt_idx
        return BackendResponse(
            logits=LogitVector(tuple(float(x) for x in rec["logits"])),
            sim_ms=float(rec["t_ms"]),
            h_txt=h_txt,
            h_vis=h_vis,
            ground_truth_index=gt_idx,
            correct=correct,
        )

    def densities(self) -> tuple[int, ...]:
        return tuple(sorted({k[2] for k in self.records if k[1] == "large" and k[2] is not None}))

    def query_ids(self) -> list[str]:
        seen = []
        for qid, role, _ in self.records:
            if role == "small" and qid not in seen:
                seen.append(qid)
        return seen

    def record(self, qid: str, role: Role, density: int | None) -> dict:
        key = (qid, role.value, density)
        if key not in self.records:
            raise MissingRecord(f"no trace record for {key}")
        return self.records[key]


def trace_answer(trace: TraceBackend, qid: str, role: Role, density: int | None) -> BackendResponse:
    return trace.answer(qid, role, density)
