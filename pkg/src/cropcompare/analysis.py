"""Correlating map performance with resolution and recency; masked index time series."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .assess import METRICS
from .errors import UndefinedCorrelationError
from .grid import BinaryMask, CategoricalRaster, require_coregistered
from .productmap import ProductSpec

CORRELATION_HEADER = ["metric", "r", "n", "excluded"]
TIMESERIES_HEADER = ["timestamp", "mask", "region", "mean", "count"]


@dataclass(frozen=True)
class CorrelationResult:
    metric_name: str
    r: float
    n_points: int
    excluded: tuple[str, ...] = ()


@dataclass(frozen=True)
class TimeSeriesEntry:
    timestamp: date
    mean: float | None
    pixel_count: int

    @property
    def missing(self) -> bool:
        return self.mean is None


@dataclass(frozen=True)
class TimeSeries:
    entries: tuple[TimeSeriesEntry, ...]
    mask_name: str = ""
    region_name: str = ""

    def __post_init__(self):
        stamps = [e.timestamp for e in self.entries]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("timestamps must be strictly increasing")


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be equal-length sequences")
    if x.size < 2:
        raise UndefinedCorrelationError("correlation needs at least two points")
    dx = x - math.fsum(x) / x.size
    dy = y - math.fsum(y) / y.size
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant sequence")
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _correlate(metric: str, pairs: list[tuple[float, float]], excluded) -> CorrelationResult:
    if len(pairs) < 2:
        raise UndefinedCorrelationError(f"{metric}: fewer than 2 points remain after exclusion")
    xs, ys = zip(*pairs)
    return CorrelationResult(metric, pearson(xs, ys), len(pairs), tuple(sorted(excluded)))


def metric_vs_resolution(
    table: Mapping[str, Mapping[str, float]],
    specs: Mapping[str, ProductSpec],
    exclude: Iterable[str] = (),
    metrics: Sequence[str] = METRICS,
) -> dict[str, CorrelationResult]:
    """Correlate each map's (country-averaged) metric with its native resolution.

    ``table`` maps map name -> metric name -> value.
    """
    exclude = set(exclude)
    missing = [name for name in table if name not in exclude and name not in specs]
    if missing:
        raise KeyError(f"no product spec for maps {missing}")
    out = {}
    for metric in metrics:
        pairs = [
            (specs[name].native_resolution_m, values[metric])
            for name, values in table.items()
            if name not in exclude
        ]
        out[metric] = _correlate(metric, pairs, exclude)
    return out


def temporal_mismatch(map_year: int, reference_year: int) -> int:
    return abs(map_year - reference_year)


def metric_vs_mismatch(
    table: Mapping[tuple[str, str], Mapping[str, float]],
    map_year: Callable[[str, int], int],
    reference_years: Mapping[str, int],
    exclude: Iterable[str] = (),
    metrics: Sequence[str] = METRICS,
) -> dict[str, CorrelationResult]:
    """Correlate per-(country, map) metrics with |map year - reference year|.

    ``table`` maps (country, map) -> metric -> value; ``map_year(name, ref_year)``
    gives the year attributed to a map for a given reference year.
    """
    exclude = set(exclude)
    keys = [(c, m) for c, m in table if m not in exclude]
    gaps = {
        (c, m): temporal_mismatch(map_year(m, reference_years[c]), reference_years[c])
        for c, m in keys
    }
    return {
        metric: _correlate(metric, [(gaps[k], table[k][metric]) for k in keys], exclude)
        for metric in metrics
    }


def masked_timeseries(
    frames: Sequence[tuple[date, CategoricalRaster]],
    mask: BinaryMask,
    region: BinaryMask,
    scale: float = 1.0,
    mask_name: str = "",
    region_name: str = "",
) -> TimeSeries:
    """Mean frame value over pixels inside both the mask and the region.

    Sums are accumulated exactly in integers, so the result does not depend on
    how the pixels are partitioned. Frames with no selected pixel give a
    missing entry.
    """
    require_coregistered(mask.grid, region.grid)
    selected = (mask.values == 1) & (region.values == 1)
    entries = []
    for stamp, frame in sorted(frames, key=lambda f: f[0]):
        require_coregistered(mask.grid, frame.grid)
        use = selected & frame.valid
        count = int(np.count_nonzero(use))
        if count == 0:
            entries.append(TimeSeriesEntry(stamp, None, 0))
            continue
        total = int(frame.values[use].astype(np.int64).sum())
        entries.append(TimeSeriesEntry(stamp, (total / count) * scale, count))
    return TimeSeries(tuple(entries), mask_name, region_name)


def write_correlation_csv(results: Iterable[CorrelationResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CORRELATION_HEADER)
        for res in results:
            writer.writerow([res.metric_name, repr(res.r), res.n_points, "|".join(res.excluded)])


def write_timeseries_csv(series: Iterable[TimeSeries], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TIMESERIES_HEADER)
        for ts in series:
            for e in ts.entries:
                mean = "" if e.mean is None else repr(e.mean)
                writer.writerow([e.timestamp.isoformat(), ts.mask_name, ts.region_name, mean,
                                 e.pixel_count])
