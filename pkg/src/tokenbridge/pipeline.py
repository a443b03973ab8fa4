"""Three-stage video-to-token pipeline: decode, preprocess, encode.

Each stage runs on its own worker thread; stages talk through order-
preserving bounded links, so the result is bit-identical to running the
three handlers sequentially while overlapping their wall-clock time.

A link's capacity bounds memory: a producer claims a slot *before* it
computes a batch and the slot is released only after the consumer has
finished with that batch, so at most ``capacity`` outputs of any stage
are alive at once.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import TokenTensor

STAGE_NAMES = ("decode", "preprocess", "encode")


class StageFailure(RuntimeError):
    """A handler raised; downstream batches are abandoned.

    ``completed`` carries the encode outputs that finished before the
    failure, in batch order.
    """

    def __init__(self, batch_index: int, stage: str, cause: BaseException, completed):
        super().__init__(f"stage {stage} failed on batch {batch_index}: {cause!r}")
        self.batch_index = batch_index
        self.stage = stage
        self.cause = cause
        self.completed = completed


@dataclass(frozen=True)
class StageSpec:
    name: str
    handler: Callable
    queue_capacity: int = 2

    def __post_init__(self):
        if self.name not in STAGE_NAMES:
            raise ValueError(f"stage name must be one of {STAGE_NAMES}")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")


@dataclass
class PipelineReport:
    """Start/end timestamps (ms, relative to pipeline start) per batch per stage."""

    stage_names: tuple[str, ...]
    starts_ms: list[list[float]]  # [batch][stage]
    ends_ms: list[list[float]]
    makespan_ms: float = 0.0
    sequential_estimate_ms: float = 0.0

    def stage_busy_ms(self, stage: int) -> float:
        return sum(e[stage] - s[stage] for s, e in zip(self.starts_ms, self.ends_ms))

    def max_stage_busy_ms(self) -> float:
        return max(self.stage_busy_ms(j) for j in range(len(self.stage_names)))

    def to_dict(self) -> dict:
        return {
            "stage_names": list(self.stage_names),
            "starts_ms": self.starts_ms,
            "ends_ms": self.ends_ms,
            "makespan_ms": self.makespan_ms,
            "sequential_estimate_ms": self.sequential_estimate_ms,
        }


class _Link:
    """Order-preserving bounded handoff between adjacent stages.

    A slot is reserved before the producer computes and released once the
    consumer is done with the item, so slots-in-use bounds live outputs.
    """

    def __init__(self, capacity: int):
        self._capacity = capacity
        self._held = 0
        self._items = []
        self._cond = threading.Condition()
        self._closed = False

    def reserve(self) -> bool:
        """Claim an output slot; False means the link closed while waiting."""
        with self._cond:
            while self._held >= self._capacity and not self._closed:
                self._cond.wait()
            if self._closed:
                return False
            self._held += 1
            return True

    def put(self, item):
        with self._cond:
            self._items.append(item)
            self._cond.notify_all()

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def get(self):
        with self._cond:
            while not self._items and not self._closed:
                self._cond.wait()
            if self._items:
                return self._items.pop(0)
            return None  # closed and drained

    def release(self):
        with self._cond:
            self._held -= 1
            self._cond.notify_all()


def run_pipeline(batches, stages: tuple[StageSpec, StageSpec, StageSpec]):
    """Run every batch through decode -> preprocess -> encode.

    Returns (TokenTensor, PipelineReport). Encode handlers must produce
    float32 arrays shaped (batch_frames, tokens_per_frame, dim); outputs
    are concatenated along the frame axis in batch order.
    """
    if not batches:
        raise ValueError("need at least one batch")
    if len(stages) != 3 or tuple(s.name for s in stages) != STAGE_NAMES:
        raise ValueError("stages must be (decode, preprocess, encode)")

    n = len(batches)
    t0 = time.perf_counter()
    starts = [[0.0] * 3 for _ in range(n)]
    ends = [[0.0] * 3 for _ in range(n)]
    outputs: list = [None] * n
    links = [_Link(stages[0].queue_capacity), _Link(stages[1].queue_capacity)]
    failure: list = []
    stop = threading.Event()

    def now_ms():
        return (time.perf_counter() - t0) * 1000.0

    def fail(idx, stage_idx, exc):
        if not failure:
            failure.append((idx, stage_idx, exc))
        stop.set()
        for link in links:
            link.close()

    def worker(stage_idx):
        spec = stages[stage_idx]
        upstream = links[stage_idx - 1] if stage_idx > 0 else None
        downstream = links[stage_idx] if stage_idx < 2 else None
        for i in range(n):
            if upstream is None:
                # source stage stops producing on failure; consumers instead
                # drain what was already produced upstream of the failure
                if stop.is_set():
                    break
                item = (i, batches[i])
            else:
                item = upstream.get()
                if item is None:
                    break
            idx, payload = item
            if downstream is not None and not downstream.reserve():
                break
            starts[idx][stage_idx] = now_ms()
            try:
                result = spec.handler(payload)
            except Exception as exc:
                if downstream is not None:
                    downstream.release()
                fail(idx, stage_idx, exc)
                break
            ends[idx][stage_idx] = now_ms()
            if downstream is not None:
                downstream.put((idx, result))
            else:
                outputs[idx] = result
            if upstream is not None:
                upstream.release()
        if downstream is not None:
            downstream.close()

    threads = [threading.Thread(target=worker, args=(j,), name=f"pipeline-{STAGE_NAMES[j]}")
               for j in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    if failure:
        idx, stage_idx, exc = failure[0]
        completed = [o for o in outputs if o is not None]
        raise StageFailure(idx, STAGE_NAMES[stage_idx], exc, completed)

    report = PipelineReport(STAGE_NAMES, starts, ends)
    # measured from the first decode start so thread spawn cost is excluded
    report.makespan_ms = max(e[2] for e in ends) - starts[0][0]
    report.sequential_estimate_ms = sum(
        ends[i][j] - starts[i][j] for i in range(n) for j in range(3)
    )
    arrays = [np.asarray(o, dtype=np.float32) for o in outputs]
    for a in arrays:
        if a.ndim != 3:
            raise ValueError("encode outputs must be (frames, tokens_per_frame, dim)")
    stacked = np.concatenate(arrays, axis=0)
    tensor = TokenTensor(stacked.shape[0], stacked.shape[1], stacked.shape[2], stacked)
    return tensor, report


def flow_shop_completion(stage_times_ms, capacity: int | None = None) -> np.ndarray:
    """Completion times of every (batch, stage) pair through the stage chain.

    ``stage_times_ms`` is an (n_batches, n_stages) array of per-batch
    handler durations. With unbounded buffers this is the classic
    recurrence C(i,j) = max(C(i-1,j), C(i,j-1)) + t(i,j); a finite link
    capacity q adds the blocking constraint C(i-q, j+1) <= start(i, j).
    """
    t = np.asarray(stage_times_ms, dtype=np.float64)
    n, m = t.shape
    C = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            start = 0.0
            if i > 0:
                start = max(start, C[i - 1, j])
            if j > 0:
                start = max(start, C[i, j - 1])
            if capacity is not None and j < m - 1 and i - capacity >= 0:
                start = max(start, C[i - capacity, j + 1])
            C[i, j] = start + t[i, j]
    return C


def flow_shop_makespan(stage_times_ms, capacity: int | None = None) -> float:
    return float(flow_shop_completion(stage_times_ms, capacity)[-1, -1])
