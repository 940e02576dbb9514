"""Reference point datasets, sampling designs and label consolidation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyInputError, SchemaError
from .grid import CategoricalRaster, RegionPolygon, points_in_polygons

REFERENCE_HEADER = ["x", "y", "label", "country", "validity_start", "validity_end"]
RAW_HEADER = ["x", "y", "labels", "country", "validity_start", "validity_end"]

# Recorded in output metadata so samples can be regenerated.
RNG_ALGORITHM = "numpy.random.Generator(PCG64)"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class RawLabeledPoint:
    x: float
    y: float
    labels: tuple[int, ...]
    country: str
    validity_start: date
    validity_end: date

    def __post_init__(self):
        if not self.labels:
            raise ValueError("a raw point needs at least one label")
        if any(lab not in (0, 1) for lab in self.labels):
            raise ValueError(f"labels must be 0 or 1, got {self.labels}")


@dataclass(frozen=True, eq=False)
class ReferenceDataset:
    x: np.ndarray
    y: np.ndarray
    label: np.ndarray
    country: str
    validity_start: date
    validity_end: date

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        label = np.asarray(self.label, dtype=np.int64)
        if not (x.shape == y.shape == label.shape) or x.ndim != 1:
            raise ValueError("x, y and label must be 1-d arrays of equal length")
        if np.any((label != 0) & (label != 1)):
            raise ValueError("labels must be 0 or 1")
        for name, arr in (("x", x), ("y", y), ("label", label)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return int(self.label.size)

    def __eq__(self, other):
        if not isinstance(other, ReferenceDataset):
            return NotImplemented
        return (
            self.country == other.country
            and self.validity_start == other.validity_start
            and self.validity_end == other.validity_end
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.label, other.label)
        )

    __hash__ = None

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    @property
    def counts(self) -> tuple[int, int, int]:
        """(total, crop, non-crop)."""
        crop = int(self.label.sum())
        return len(self), crop, len(self) - crop

    @property
    def reference_year(self) -> int:
        return reference_year(self.validity_start, self.validity_end)


def reference_year(start: date, end: date) -> int:
    """Calendar year holding most days of [start, end]; ties go to the earlier year."""
    if end < start:
        raise ValueError("validity period ends before it starts")
    best_year, best_days = start.year, -1
    for year in range(start.year, end.year + 1):
        lo = max(start, date(year, 1, 1))
        hi = min(end, date(year, 12, 31))
        days = (hi - lo + timedelta(days=1)).days
        if days > best_days:
            best_year, best_days = year, days
    return best_year


def consolidate(raw: Sequence[RawLabeledPoint]) -> ReferenceDataset:
    """Keep only the points all interpreters labeled identically."""
    if not raw:
        raise EmptyInputError("no raw points to consolidate")
    first = raw[0]
    for p in raw:
        if (p.country, p.validity_start, p.validity_end) != (
            first.country,
            first.validity_start,
            first.validity_end,
        ):
            raise ValueError("raw points must share country and validity period")
    kept = [p for p in raw if len(set(p.labels)) == 1]
    return ReferenceDataset(
        x=np.array([p.x for p in kept], dtype=np.float64),
        y=np.array([p.y for p in kept], dtype=np.float64),
        label=np.array([p.labels[0] for p in kept], dtype=np.int64),
        country=first.country,
        validity_start=first.validity_start,
        validity_end=first.validity_end,
    )


# --- sampling ------------------------------------------------------------------


def _as_polys(region) -> list[RegionPolygon]:
    return [region] if isinstance(region, RegionPolygon) else list(region)


def uniform_sample(region, n: int, seed: int, batch: int = 4096) -> np.ndarray:
    """``n`` points uniform over the region by rejection from its bounding box.

    Returns an (n, 2) array of x, y.
    """
    polys = _as_polys(region)
    if n < 1:
        raise ValueError("n must be at least 1")
    if sum(p.area() for p in polys) <= 0:
        raise ValueError("region has zero area")
    xmin = min(p.bbox[0] for p in polys)
    ymin = min(p.bbox[1] for p in polys)
    xmax = max(p.bbox[2] for p in polys)
    ymax = max(p.bbox[3] for p in polys)
    rng = make_rng(seed)
    out = np.empty((0, 2))
    while len(out) < n:
        u = rng.random((batch, 2))
        xs = xmin + u[:, 0] * (xmax - xmin)
        ys = ymin + u[:, 1] * (ymax - ymin)
        inside = points_in_polygons(polys, xs, ys)
        out = np.vstack([out, np.column_stack([xs[inside], ys[inside]])])
    return out[:n]


def stratified_sample(
    strata: CategoricalRaster, allocation: Mapping[int, int], seed: int
) -> list[tuple[float, float, int]]:
    """Draw pixel centers without replacement from each stratum.

    Strata are processed in ascending code order from a single random stream.
    """
    rng = make_rng(seed)
    flat = strata.values.ravel()
    xc = strata.grid.col_centers()
    yc = strata.grid.row_centers()
    out = []
    for code in sorted(allocation):
        want = int(allocation[code])
        pool = np.flatnonzero(flat == code)
        if pool.size == 0:
            raise ValueError(f"stratum {code} does not occur in the strata raster")
        if want > pool.size:
            raise ValueError(f"stratum {code}: allocation {want} exceeds its {pool.size} pixels")
        chosen = np.sort(rng.choice(pool, size=want, replace=False))
        rows, cols = np.divmod(chosen, strata.grid.width)
        out.extend((float(xc[c]), float(yc[r]), int(code)) for r, c in zip(rows, cols))
    return out


# --- CSV -----------------------------------------------------------------------


def _parse_date(text: str, where: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise SchemaError(f"{where}: bad ISO date {text!r}") from exc


def _parse_label(text: str, where: str) -> int:
    if text not in ("0", "1"):
        raise SchemaError(f"{where}: label must be 0 or 1, got {text!r}")
    return int(text)


def _read_rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if found != header:
            raise SchemaError(f"{path}: expected header {','.join(header)}, got {','.join(found)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields")
            yield f"{path}:{lineno}", row


def read_reference_csv(path) -> ReferenceDataset:
    xs, ys, labels, meta = [], [], [], set()
    for where, (x, y, label, country, start, end) in _read_rows(path, REFERENCE_HEADER):
        try:
            xs.append(float(x))
            ys.append(float(y))
        except ValueError as exc:
            raise SchemaError(f"{where}: bad coordinate") from exc
        labels.append(_parse_label(label, where))
        meta.add((country, _parse_date(start, where), _parse_date(end, where)))
    if len(meta) != 1:
        raise SchemaError(f"{path}: expected exactly one country/validity period, found {len(meta)}")
    country, start, end = meta.pop()
    return ReferenceDataset(np.array(xs), np.array(ys), np.array(labels, dtype=np.int64),
                            country, start, end)


def write_reference_csv(ds: ReferenceDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REFERENCE_HEADER)
        for x, y, label in zip(ds.x, ds.y, ds.label):
            writer.writerow([repr(float(x)), repr(float(y)), int(label), ds.country,
                             ds.validity_start.isoformat(), ds.validity_end.isoformat()])


def read_raw_reference_csv(path) -> list[RawLabeledPoint]:
    out = []
    for where, (x, y, labels, country, start, end) in _read_rows(path, RAW_HEADER):
        parsed = tuple(_parse_label(t, where) for t in labels.split("|"))
        out.append(RawLabeledPoint(float(x), float(y), parsed, country,
                                   _parse_date(start, where), _parse_date(end, where)))
    return out


def write_raw_reference_csv(points: Sequence[RawLabeledPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RAW_HEADER)
        for p in points:
            writer.writerow([repr(float(p.x)), repr(float(p.y)), "|".join(map(str, p.labels)),
                             p.country, p.validity_start.isoformat(), p.validity_end.isoformat()])


def write_points_csv(points, path, with_stratum: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "stratum"] if with_stratum else ["x", "y"])
        for p in points:
            row = [repr(float(p[0])), repr(float(p[1]))]
            if with_stratum:
                row.append(int(p[2]))
            writer.writerow(row)
