"""Accuracy assessment of crop masks against reference points.

Standard errors use the simple-random-sampling binomial estimators. The F1
error is propagated from the precision and recall errors by adding relative
errors of the numerator 2PR and the denominator P+R, which are correlated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyInputError
from .grid import BinaryMask
from .productmap import extract_values
from .reference import ReferenceDataset

METRICS = ("accuracy", "f1", "precision", "recall")

SE_ESTIMATOR = "binomial simple random sampling: sqrt(p(1-p)/n_denominator)"
SE_MEAN_RULE = "sqrt(sum(se_i^2))/k"


@dataclass(frozen=True)
class ErrorMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ErrorMatrix") -> "ErrorMatrix":
        return ErrorMatrix(self.tp + other.tp, self.fp + other.fp,
                           self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    se_accuracy: float
    se_precision: float
    se_recall: float
    se_f1: float
    # names of metrics whose denominator was zero
    degenerate: frozenset[str] = field(default=frozenset())

    def value(self, metric: str) -> float:
        return getattr(self, metric)

    def stderr(self, metric: str) -> float:
        return getattr(self, f"se_{metric}")


@dataclass(frozen=True)
class Evaluation:
    metrics: MetricSet
    matrix: ErrorMatrix
    excluded: int


def error_matrix(predicted, reference) -> ErrorMatrix:
    pred = np.asarray(predicted)
    ref = np.asarray(reference)
    if pred.shape != ref.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {ref.shape}")
    if pred.size == 0:
        raise EmptyInputError("error matrix needs at least one pair")
    for name, arr in (("predicted", pred), ("reference", ref)):
        if np.any((arr != 0) & (arr != 1)):
            raise ValueError(f"{name} values must be 0 or 1")
    pred = pred.astype(bool)
    ref = ref.astype(bool)
    return ErrorMatrix(
        tp=int(np.count_nonzero(pred & ref)),
        fp=int(np.count_nonzero(pred & ~ref)),
        fn=int(np.count_nonzero(~pred & ref)),
        tn=int(np.count_nonzero(~pred & ~ref)),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _binomial_se(p: float, n: int) -> float:
    if n == 0:
        return 0.0
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def standard_errors(m: ErrorMatrix) -> tuple[float, float, float]:
    """(se_accuracy, se_precision, se_recall); zero where the denominator is zero."""
    acc = _ratio(m.tp + m.tn, m.n)
    prec = _ratio(m.tp, m.tp + m.fp)
    rec = _ratio(m.tp, m.tp + m.fn)
    return (
        _binomial_se(acc, m.n),
        _binomial_se(prec, m.tp + m.fp),
        _binomial_se(rec, m.tp + m.fn),
    )


def f1_stderr(p: float, dp: float, r: float, dr: float) -> float:
    """Propagated error of F1 = 2PR/(P+R); 0 when P+R is 0."""
    y = p + r
    if y <= 0:
        return 0.0
    x = 2.0 * p * r
    dx = 2.0 * (r * dp + p * dr)
    dy = dp + dr
    return dx / y + x * dy / (y * y)


def compute_metrics(m: ErrorMatrix) -> MetricSet:
    if m.n < 1:
        raise EmptyInputError("error matrix is empty")
    degenerate = set()
    if m.tp + m.fp == 0:
        degenerate.add("precision")
    if m.tp + m.fn == 0:
        degenerate.add("recall")
    acc = (m.tp + m.tn) / m.n
    prec = _ratio(m.tp, m.tp + m.fp)
    rec = _ratio(m.tp, m.tp + m.fn)
    if prec + rec > 0:
        f1 = 2.0 * prec * rec / (prec + rec)
    else:
        f1 = 0.0
        degenerate.add("f1")
    se_acc, se_prec, se_rec = standard_errors(m)
    return MetricSet(
        accuracy=acc,
        precision=prec,
        recall=rec,
        f1=f1,
        se_accuracy=se_acc,
        se_precision=se_prec,
        se_recall=se_rec,
        se_f1=f1_stderr(prec, se_prec, rec, se_rec),
        degenerate=frozenset(degenerate),
    )


def aggregate_mean(sets: Sequence[MetricSet]) -> MetricSet:
    """Arithmetic mean of each metric; errors combined as uncorrelated."""
    if not sets:
        raise EmptyInputError("nothing to average")
    k = len(sets)
    values = {}
    for metric in METRICS:
        values[metric] = math.fsum(s.value(metric) for s in sets) / k
        values[f"se_{metric}"] = math.sqrt(math.fsum(s.stderr(metric) ** 2 for s in sets)) / k
    return MetricSet(**values, degenerate=frozenset().union(*(s.degenerate for s in sets)))


def evaluate_map(mask: BinaryMask, ds: ReferenceDataset) -> Evaluation:
    """Score a mask at the reference points, skipping points on nodata pixels."""
    predicted = extract_values(mask, ds.points)
    keep = predicted != mask.nodata
    excluded = int(np.count_nonzero(~keep))
    if not keep.any():
        raise EmptyInputError("all points excluded: every reference point falls on nodata")
    matrix = error_matrix(predicted[keep], ds.label[keep])
    return Evaluation(compute_metrics(matrix), matrix, excluded)


def round_half_up(value: float, digits: int = 2) -> float:
    """Decimal rounding as printed in accuracy tables (0.125 -> 0.13)."""
    scale = 10 ** digits
    return math.floor(value * scale + 0.5 + 1e-9) / scale


def display(metrics: MetricSet, metric: str) -> str:
    return f"{round_half_up(metrics.value(metric)):.2f}±{round_half_up(metrics.stderr(metric)):.2f}"

