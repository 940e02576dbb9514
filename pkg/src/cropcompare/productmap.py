"""Map product registry and the rules that turn each product into a crop mask."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, SchemaError
from .grid import MASK_NODATA, BinaryMask, CategoricalRaster, require_coregistered

RULE_VARIANTS = ("class_set", "threshold_gt", "fraction_range")


@dataclass(frozen=True)
class BinarizeRule:
    variant: str
    class_set: frozenset[int] = frozenset()
    threshold: float | None = None
    range_lo: float | None = None
    range_hi: float | None = None

    def __post_init__(self):
        if self.variant not in RULE_VARIANTS:
            raise SchemaError(f"unknown rule variant {self.variant!r}")
        populated = {
            "class_set": bool(self.class_set),
            "threshold_gt": self.threshold is not None,
            "fraction_range": self.range_lo is not None or self.range_hi is not None,
        }
        if [k for k, v in populated.items() if v] != [self.variant]:
            raise SchemaError(f"rule {self.variant!r} must populate exactly its own fields")
        if self.variant == "fraction_range":
            if self.range_lo is None or self.range_hi is None or self.range_lo > self.range_hi:
                raise SchemaError("fraction_range needs range_lo <= range_hi")

    @classmethod
    def classes(cls, codes) -> "BinarizeRule":
        return cls("class_set", class_set=frozenset(int(c) for c in codes))

    @classmethod
    def greater_than(cls, threshold: float) -> "BinarizeRule":
        return cls("threshold_gt", threshold=float(threshold))

    @classmethod
    def fraction(cls, lo: float, hi: float) -> "BinarizeRule":
        return cls("fraction_range", range_lo=float(lo), range_hi=float(hi))

    def matches(self, values: np.ndarray) -> np.ndarray:
        if self.variant == "class_set":
            return np.isin(values, np.fromiter(self.class_set, dtype=np.int64))
        if self.variant == "threshold_gt":
            return values > self.threshold
        return (values >= self.range_lo) & (values <= self.range_hi)

    def to_json(self) -> dict:
        if self.variant == "class_set":
            return {"variant": self.variant, "classes": sorted(self.class_set)}
        if self.variant == "threshold_gt":
            return {"variant": self.variant, "threshold": self.threshold}
        return {"variant": self.variant, "range": [self.range_lo, self.range_hi]}


@dataclass(frozen=True)
class ProductSpec:
    name: str
    nominal_years: tuple[int, ...]
    native_resolution_m: float
    model_scale: str
    rule: BinarizeRule
    composite: bool = False
    map_year: int | None = None
    title: str = ""

    def __post_init__(self):
        if not self.native_resolution_m > 0:
            raise SchemaError(f"{self.name}: resolution must be positive")
        if not self.nominal_years:
            raise SchemaError(f"{self.name}: nominal_years must not be empty")

    def year_for(self, reference_year: int) -> int:
        """Year attributed to the map when compared against ``reference_year``."""
        if self.composite:
            return reference_year
        if self.map_year is not None:
            return self.map_year
        if len(self.nominal_years) == 1:
            return self.nominal_years[0]
        raise SchemaError(
            f"{self.name} spans several years {list(self.nominal_years)}; set map_year explicitly"
        )


def binarize(raster: CategoricalRaster, rule: BinarizeRule) -> BinaryMask:
    crop = rule.matches(raster.values)
    out = crop.astype(np.uint8)
    out[~raster.valid] = MASK_NODATA
    return BinaryMask(raster.grid, out, MASK_NODATA)


def mode_composite(frames: Sequence[tuple[date, CategoricalRaster]]) -> CategoricalRaster:
    """Per-pixel most frequent valid class across dated frames.

    Ties go to the smallest class code; a pixel is nodata only when every
    frame is nodata there. The output uses the first frame's nodata code.
    """
    if not frames:
        raise EmptyInputError("mode_composite needs at least one frame")
    rasters = [r for _, r in frames]
    first = rasters[0]
    for r in rasters[1:]:
        require_coregistered(first.grid, r.grid)
    classes = np.unique(np.concatenate([np.unique(r.values[r.valid]) for r in rasters]))
    if classes.size == 0:
        return first
    counts = np.zeros((classes.size,) + first.grid.shape, dtype=np.int32)
    for r in rasters:
        valid = r.valid
        for k, code in enumerate(classes):
            counts[k] += (r.values == code) & valid
    # argmax returns the first maximum, i.e. the smallest code among ties
    best = classes[np.argmax(counts, axis=0)]
    any_valid = counts.sum(axis=0) > 0
    out = np.where(any_valid, best, first.nodata).astype(first.values.dtype)
    return first.with_values(out)


def frames_in_period(frames, start: date, end: date):
    return [(d, r) for d, r in frames if start <= d <= end]


def extract_values(raster: CategoricalRaster, points) -> np.ndarray:
    """Value of the pixel containing each (x, y) point; nodata outside the extent."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    rows, cols, inside = raster.grid.index_of(pts[:, 0], pts[:, 1])
    out = raster.values[rows, cols].astype(np.int64)
    out[~inside] = raster.nodata
    return out


def _rule_from_json(name: str, doc) -> BinarizeRule:
    if not isinstance(doc, dict) or "variant" not in doc:
        raise SchemaError(f"{name}: rule must be an object with a variant")
    variant = doc["variant"]
    try:
        if variant == "class_set":
            classes = doc["classes"]
            if not classes:
                raise SchemaError(f"{name}: class_set rule needs at least one class")
            return BinarizeRule.classes(classes)
        if variant == "threshold_gt":
            return BinarizeRule.greater_than(doc["threshold"])
        if variant == "fraction_range":
            lo, hi = doc["range"]
            return BinarizeRule.fraction(lo, hi)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{name}: malformed {variant} rule: {exc}") from exc
    raise SchemaError(f"{name}: unknown rule variant {variant!r}")


def product_from_json(doc: dict) -> ProductSpec:
    missing = [k for k in ("name", "years", "resolution_m", "rule") if k not in doc]
    if missing:
        raise SchemaError(f"product entry missing fields {missing}: {doc}")
    name = str(doc["name"])
    try:
        return ProductSpec(
            name=name,
            nominal_years=tuple(int(y) for y in doc["years"]),
            native_resolution_m=float(doc["resolution_m"]),
            model_scale=str(doc.get("model_scale", "")),
            rule=_rule_from_json(name, doc["rule"]),
            composite=bool(doc.get("composite", False)),
            map_year=int(doc["map_year"]) if doc.get("map_year") is not None else None,
            title=str(doc.get("title", name)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{name}: {exc}") from exc


def product_to_json(spec: ProductSpec) -> dict:
    doc = {
        "name": spec.name,
        "title": spec.title,
        "years": list(spec.nominal_years),
        "resolution_m": spec.native_resolution_m,
        "model_scale": spec.model_scale,
        "rule": spec.rule.to_json(),
        "composite": spec.composite,
    }
    if spec.map_year is not None:
        doc["map_year"] = spec.map_year
    return doc


def load_product_registry(path=None) -> list[ProductSpec]:
    """Read a registry document; with no path, the bundled eleven-product registry."""
    if path is None:
        text = resources.files("cropcompare").joinpath("data/products.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"registry is not valid JSON: {exc}") from exc
    if isinstance(doc, dict):
        doc = doc.get("products")
    if not isinstance(doc, list):
        raise SchemaError("registry must be a list of product objects")
    specs = [product_from_json(d) for d in doc]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate product names in registry")
    return specs


def registry_by_name(specs: Sequence[ProductSpec]) -> dict[str, ProductSpec]:
    return {s.name: s for s in specs}
