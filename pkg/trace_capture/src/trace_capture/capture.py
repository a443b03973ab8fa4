"""Benchmark sweep -> tb-trace-v1 JSON lines.

The output file is append-safe: existing (qid, role, density) keys are
skipped on restart, so an interrupted capture can simply be re-run. The
first line of a fresh file is a schema header recording the format
version and which embedding layer the capture exported.
"""

from __future__ import annotations

import hashlib
import importlib
import json
import logging
import os
import random
import shutil
import subprocess

TRACE_SCHEMA = "tb-trace-v1"
DEFAULT_ACTIONS = (2, 4, 8, 16, 32)
EMBEDDING_LAYERS = ("post_connector", "pre_connector")

log = logging.getLogger("trace_capture")


class CaptureError(RuntimeError):
    pass


class ModelPair:
    """Interface a real small/large VLM wrapper must provide.

    infer(query, role, density) -> dict with keys: logits (list of floats,
    one per option), t_ms (float), and for the small role h_txt (list) and
    h_vis (list of rows). ``density`` is None for the small role.
    """

    embed_dim = 0

    def infer(self, query: dict, role: str, density: int | None) -> dict:
        raise NotImplementedError


class StubModelPair(ModelPair):
    """Deterministic, GPU-free stand-in; outputs depend only on (seed, query, role, density)."""

    embed_dim = 8
    tokens_per_frame = 4

    def __init__(self, seed: int = 0, embedding_layer: str = "post_connector"):
        self.seed = seed
        self.embedding_layer = embedding_layer

    def _rng(self, qid: str, role: str, density) -> random.Random:
        key = f"{self.seed}|{qid}|{role}|{density}|{self.embedding_layer}"
        digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
        return random.Random(int.from_bytes(digest, "little"))

    def infer(self, query: dict, role: str, density: int | None) -> dict:
        rng = self._rng(query["qid"], role, density)
        options = query["options"]
        gt = query.get("gt")
        logits = [rng.gauss(0.0, 1.5) for _ in options]
        if gt is not None and rng.random() < (0.75 if role == "large" else 0.6):
            logits[options.index(gt)] = max(logits) + rng.random() * 2.0
        out = {
            "logits": [round(z, 6) for z in logits],
            "t_ms": round(20.0 + 80.0 * rng.random(), 3),
        }
        if role == "small":
            n = int(query["n_frames"])
            out["h_txt"] = [round(rng.gauss(0, 1), 5) for _ in range(self.embed_dim)]
            out["h_vis"] = [
                [round(rng.gauss(0, 1), 4) for _ in range(self.embed_dim)]
                for _ in range(n * self.tokens_per_frame)
            ]
        return out


def load_model_pair(spec: str, seed: int = 0, embedding_layer: str = "post_connector") -> ModelPair:
    """Build a model pair from a spec string.

    ``stub`` gives the deterministic test pair; anything else must be
    ``module.path:factory`` naming a zero-config callable returning a
    ModelPair (this is where a real GPU-backed wrapper plugs in).
    """
    if spec == "stub":
        return StubModelPair(seed=seed, embedding_layer=embedding_layer)
    if ":" not in spec:
        raise CaptureError(f"unknown model pair {spec!r}: use 'stub' or 'module:factory'")
    mod_name, _, factory = spec.partition(":")
    try:
        module = importlib.import_module(mod_name)
        pair = getattr(module, factory)()
    except Exception as e:
        raise CaptureError(f"cannot load model pair {spec!r}: {e}") from e
    if not isinstance(pair, ModelPair):
        raise CaptureError(f"{spec!r} did not produce a ModelPair")
    return pair


def load_manifest(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    queries = doc.get("queries")
    if not isinstance(queries, list) or not queries:
        raise CaptureError("manifest needs a non-empty 'queries' list")
    default_options = doc.get("options_default", ["A", "B", "C", "D"])
    for i, q in enumerate(queries):
        if "qid" not in q or "question" not in q:
            raise CaptureError(f"query #{i} needs qid and question")
        q.setdefault("options", list(default_options))
        if "n_frames" not in q and "video" not in q:
            raise CaptureError(f"query {q['qid']} needs n_frames or a video path")
    return doc


def _sample_count_from_video(video: str, sampler_cli: str) -> int:
    """Ask the serving stack's own CLI how many frames it would sample."""
    exe = shutil.which(sampler_cli)
    if exe is None:
        raise CaptureError(f"sampler CLI {sampler_cli!r} not found on PATH")
    proc = subprocess.run([exe, "sample", "--video", video],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise CaptureError(f"{sampler_cli} sample failed: {proc.stderr.strip()}")
    return int(json.loads(proc.stdout)["count"])


def _existing_keys(path: str) -> set:
    keys = set()
    if not os.path.exists(path):
        return keys
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "qid" in rec:
                d = rec.get("density")
                keys.add((rec["qid"], rec["role"], None if d is None else int(d)))
    return keys


def capture(manifest_path: str, out_path: str, model_pair: ModelPair,
            actions: tuple[int, ...] = DEFAULT_ACTIONS,
            sampler_cli: str = "tokenbridge",
            embedding_layer: str = "post_connector") -> dict:
    """Sweep the manifest and append missing records to the trace file.

    Returns counters: written, skipped (already present), failed.
    """
    if embedding_layer not in EMBEDDING_LAYERS:
        raise CaptureError(f"embedding_layer must be one of {EMBEDDING_LAYERS}")
    manifest = load_manifest(manifest_path)
    seen = _existing_keys(out_path)
    fresh_file = not os.path.exists(out_path)
    written = skipped = failed = 0
    with open(out_path, "a", encoding="utf-8") as out:
        if fresh_file:
            out.write(json.dumps({"schema": TRACE_SCHEMA,
                                  "embedding_layer": embedding_layer,
                                  "actions": list(actions)}) + "\n")
        for query in manifest["queries"]:
            qid = query["qid"]
            try:
                if "n_frames" not in query:
                    query["n_frames"] = _sample_count_from_video(query["video"], sampler_cli)
            except CaptureError as e:
                log.warning("skipping %s: %s", qid, e)
                failed += 1
                continue
            for role, density in [("small", None)] + [("large", a) for a in actions]:
                key = (qid, role, density)
                if key in seen:
                    skipped += 1
                    continue
                try:
                    result = model_pair.infer(query, role, density)
                except Exception as e:
                    log.warning("model failure on %s/%s/%s: %s", qid, role, density, e)
                    failed += 1
                    continue
                record = {
                    "qid": qid,
                    "role": role,
                    "density": density,
                    "question": query["question"],
                    "options": list(query["options"]),
                    "gt": query.get("gt"),
                    "logits": result["logits"],
                    "h_txt": result.get("h_txt", []),
                    "h_vis": result.get("h_vis", []),
                    "n_frames": int(query["n_frames"]),
                    "t_ms": result["t_ms"],
                }
                out.write(json.dumps(record) + "\n")
                seen.add(key)
                written += 1
    return {"written": written, "skipped": skipped, "failed": failed}
