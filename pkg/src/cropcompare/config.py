"""Run configuration: one JSON document describing countries, maps and outputs."""

from __future__ import annotations

import hashlib
import json
from datetime import date
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError

from .errors import SchemaError
from .grid import GridSpec
from .productmap import ProductSpec, load_product_registry


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridModel(_Strict):
    origin_x: float
    origin_y: float
    pixel_w: PositiveFloat
    pixel_h: PositiveFloat
    width: PositiveInt
    height: PositiveInt
    crs_id: str = ""

    def to_grid(self) -> GridSpec:
        return GridSpec(**self.model_dump())


class CompositeSource(_Strict):
    """Date-stamped classifications listed in a ``date,path`` manifest."""

    frames: str
    nodata: Optional[int] = None


MapSource = Union[str, CompositeSource]


class CountryConfig(_Strict):
    boundary: str
    reference: Optional[str] = None
    maps: dict[str, MapSource] = Field(default_factory=dict)
    target_grid: Optional[GridModel] = None
    ndvi_frames: Optional[str] = None
    ndvi_scale: float = 1.0
    regions: Optional[str] = None
    region_name_field: str = "name"
    strata: Optional[str] = None
    validity_start: Optional[date] = None
    validity_end: Optional[date] = None
    default_nodata: Optional[int] = None


class RunConfig(_Strict):
    registry: Optional[str] = None
    output_dir: str = "out"
    seed: int = 0
    countries: dict[str, CountryConfig]
    map_years: dict[str, int] = Field(default_factory=dict)

    # set by load_config, not part of the document
    base_dir: Path = Field(default=Path("."), exclude=True)
    digest: str = Field(default="", exclude=True)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def products(self) -> dict[str, ProductSpec]:
        registry = self.resolve(self.registry) if self.registry else None
        specs = load_product_registry(registry)
        out = {}
        for spec in specs:
            if spec.name in self.map_years:
                spec = ProductSpec(**{**spec.__dict__, "map_year": self.map_years[spec.name]})
            out[spec.name] = spec
        return out


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: config must be a JSON object")
    for key in ("base_dir", "digest"):
        doc.pop(key, None)
    try:
        cfg = RunConfig.model_validate(
            {**doc, "base_dir": path.parent.resolve(), "digest": hashlib.sha256(raw).hexdigest()}
        )
    except ValidationError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if cfg.registry and not cfg.resolve(cfg.registry).exists():
        raise SchemaError(f"registry file {cfg.registry} does not exist")
    products = cfg.products()
    unknown = sorted(
        {name for c in cfg.countries.values() for name in c.maps if name not in products}
    )
    if unknown:
        raise SchemaError(f"maps not in the product registry: {unknown}")
    return cfg
