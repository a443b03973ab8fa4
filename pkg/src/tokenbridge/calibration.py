"""Constrained softmax over option logits, temperature scaling, and ECE.

The softmax runs over the option slice only, never the full vocabulary.
Temperature is fit by minimizing mean NLL of the correct option with a
1-D golden-section search; a single positive scalar cannot change any
argmax, so calibration never flips a prediction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import CalibratedDistribution, LogitVector


class NonFiniteLogit(ValueError):
    pass


class DegenerateLabels(ValueError):
    pass


class CalibrationDataTooSmall(UserWarning):
    pass


@dataclass(frozen=True)
class TemperatureModel:
    T: float
    fit_nll: float
    n_fit: int

    def to_dict(self) -> dict:
        return {"T": self.T, "fit_nll": self.fit_nll, "n_fit": self.n_fit}

    @classmethod
    def from_dict(cls, d: dict) -> "TemperatureModel":
        return cls(d["T"], d["fit_nll"], d["n_fit"])


@dataclass(frozen=True)
class ReliabilityReport:
    """Equal-width confidence bins with their empirical accuracy."""

    bins: tuple[tuple[float, float, float, float, int], ...]  # (lo, hi, mean_conf, acc, count)
    ece: float

    def to_dict(self) -> dict:
        return {"bins": [list(b) for b in self.bins], "ece": self.ece}


def _softmax(z: np.ndarray, T: float) -> np.ndarray:
    s = z / T
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def constrained_softmax(logits: LogitVector, T: float = 1.0) -> CalibratedDistribution:
    """Normalize the option-slice logits at temperature T.

    Returns the distribution together with the confidence (max prob),
    top1-top2 margin, and entropy normalized by log of the option count.
    """
    if T <= 0:
        raise ValueError("temperature must be > 0")
    z = logits.as_array()
    if z.size < 2:
        raise ValueError("need at least 2 options")
    if not np.isfinite(z).all():
        raise NonFiniteLogit(f"logits contain non-finite values: {z}")
    p = _softmax(z, T)
    top = np.sort(p)[::-1]
    pos = p[p > 0]
    h = float(-np.sum(pos * np.log(pos)))
    return CalibratedDistribution(
        probs=tuple(float(x) for x in p),
        confidence=float(top[0]),
        margin=float(top[0] - top[1]),
        entropy_norm=float(min(1.0, h / math.log(z.size))),
        temperature=float(T),
    )


def _mean_nll(logit_rows: list[np.ndarray], labels: np.ndarray, T: float) -> float:
    total = 0.0
    for z, y in zip(logit_rows, labels):
        p = _softmax(z, T)
        total += -math.log(max(p[y], 1e-300))
    return total / len(logit_rows)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_temperature(samples: list[tuple[LogitVector, int]],
                    t_range: tuple[float, float] = (0.25, 8.0),
                    tol: float = 1e-4) -> TemperatureModel:
    """Fit the scaling temperature on (logits, correct option index) pairs.

    Searches log-T over [log 0.25, log 8]. Fewer than 30 samples is not
    enough signal: a warning is issued and T stays at 1.
    """
    if not samples:
        raise ValueError("no calibration samples")
    rows = [lv.as_array() for lv, _ in samples]
    labels = np.asarray([y for _, y in samples], dtype=np.int64)
    for z, y in zip(rows, labels):
        if not np.isfinite(z).all():
            raise NonFiniteLogit("calibration sample has non-finite logits")
        if not 0 <= y < z.size:
            raise ValueError("correct option index out of range")

    if len(samples) < 30:
        warnings.warn("fewer than 30 calibration samples; keeping T=1",
                      CalibrationDataTooSmall)
        return TemperatureModel(1.0, _mean_nll(rows, labels, 1.0), len(samples))

    if len(set(labels.tolist())) == 1 and all(np.array_equal(rows[0], z) for z in rows[1:]):
        raise DegenerateLabels("all samples share one label and one logit pattern")

    log_t = _golden_section(
        lambda x: _mean_nll(rows, labels, math.exp(x)),
        math.log(t_range[0]), math.log(t_range[1]), tol,
    )
    T = math.exp(log_t)
    return TemperatureModel(T, _mean_nll(rows, labels, T), len(samples))


def ece(preds: list[tuple[float, bool]], n_bins: int = 10) -> ReliabilityReport:
    """Expected calibration error over equal-width confidence bins on [0,1]."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    conf = np.asarray([c for c, _ in preds], dtype=np.float64)
    correct = np.asarray([bool(k) for _, k in preds], dtype=np.float64)
    if conf.size and (conf.min() < 0 or conf.max() > 1):
        raise ValueError("confidences must lie in [0,1]")
    idx = np.minimum((conf * n_bins).astype(np.int64), n_bins - 1)
    bins = []
    total_gap = 0.0
    n = max(1, conf.size)
    for b in range(n_bins):
        mask = idx == b
        count = int(mask.sum())
        lo, hi = b / n_bins, (b + 1) / n_bins
        if count == 0:
            bins.append((lo, hi, 0.0, 0.0, 0))
            continue
        mean_conf = float(conf[mask].mean())
        acc = float(correct[mask].mean())
        total_gap += (count / n) * abs(mean_conf - acc)
        bins.append((lo, hi, mean_conf, acc, count))
    return ReliabilityReport(tuple(bins), float(total_gap))
