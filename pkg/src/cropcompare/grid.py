"""Georeferenced integer rasters: model, GeoTIFF I/O, resampling and clipping.

All geometry is north-up. Pixel membership is always decided by testing pixel
centers, and intervals are half-open: a point on the boundary between two
pixels belongs to the pixel on its right (column) or below it (row).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import tifffile

from .errors import CRSMismatchError, GridMismatchError, RasterFormatError

MASK_NODATA = 255

# GeoTIFF tag and key ids
_TAG_PIXEL_SCALE = 33550
_TAG_TIEPOINT = 33922
_TAG_TRANSFORMATION = 34264
_TAG_GEOKEYS = 34735
_TAG_GEOASCII = 34737
_TAG_GDAL_NODATA = 42113
_KEY_MODEL_TYPE = 1024
_KEY_RASTER_TYPE = 1025
_KEY_CITATION = 1026
_KEY_GEOGRAPHIC_TYPE = 2048
_KEY_PROJECTED_TYPE = 3072


@dataclass(frozen=True)
class GridSpec:
    origin_x: float
    origin_y: float
    pixel_w: float
    pixel_h: float
    width: int
    height: int
    crs_id: str = ""

    def __post_init__(self):
        if not (self.pixel_w > 0 and self.pixel_h > 0):
            raise ValueError("pixel sizes must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must have at least one pixel")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the outer pixel edges."""
        return (
            self.origin_x,
            self.origin_y - self.height * self.pixel_h,
            self.origin_x + self.width * self.pixel_w,
            self.origin_y,
        )

    @property
    def pixel_area(self) -> float:
        return self.pixel_w * self.pixel_h

    def col_centers(self) -> np.ndarray:
        return self.origin_x + (np.arange(self.width) + 0.5) * self.pixel_w

    def row_centers(self) -> np.ndarray:
        return self.origin_y - (np.arange(self.height) + 0.5) * self.pixel_h

    def index_of(self, xs, ys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row/column of the pixels containing each point, plus an inside flag."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        cols = np.floor((xs - self.origin_x) / self.pixel_w)
        rows = np.floor((self.origin_y - ys) / self.pixel_h)
        inside = (cols >= 0) & (cols < self.width) & (rows >= 0) & (rows < self.height)
        rows = np.where(inside, rows, 0).astype(np.int64)
        cols = np.where(inside, cols, 0).astype(np.int64)
        return rows, cols, inside

    def to_dict(self) -> dict:
        return {
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "pixel_w": self.pixel_w,
            "pixel_h": self.pixel_h,
            "width": self.width,
            "height": self.height,
            "crs_id": self.crs_id,
        }


def require_coregistered(a: GridSpec, b: GridSpec) -> None:
    if a.crs_id != b.crs_id:
        raise CRSMismatchError(f"CRS mismatch: {a.crs_id!r} vs {b.crs_id!r}")
    if a != b:
        raise GridMismatchError(f"grids are not co-registered: {a} vs {b}")


def _frozen(values) -> np.ndarray:
    arr = np.asarray(values)
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True, eq=False)
class CategoricalRaster:
    """Grid of integer class codes with a nodata sentinel.

    ``values`` is a read-only (height, width) array.
    """

    grid: GridSpec
    values: np.ndarray
    nodata: int

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim == 1 and values.size == self.grid.width * self.grid.height:
            values = values.reshape(self.grid.shape)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if values.dtype.kind not in "iub":
            raise ValueError(f"class codes must be integers, got {values.dtype}")
        if values.dtype.kind == "b":
            values = values.astype(np.uint8)
        if not _representable(self.nodata, values.dtype):
            raise ValueError(f"nodata {self.nodata} not representable as {values.dtype}")
        object.__setattr__(self, "nodata", int(self.nodata))
        object.__setattr__(self, "values", _frozen(values))

    def __eq__(self, other):
        if not isinstance(other, CategoricalRaster):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.nodata == other.nodata
            and self.values.dtype == other.values.dtype
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def valid(self) -> np.ndarray:
        return self.values != self.nodata

    def with_values(self, values: np.ndarray) -> "CategoricalRaster":
        return type(self)(self.grid, values, self.nodata)


class BinaryMask(CategoricalRaster):
    """Crop (1) / non-crop (0) raster; every other code must be the nodata value."""

    def __post_init__(self):
        super().__post_init__()
        if self.nodata in (0, 1):
            raise ValueError("mask nodata must differ from 0 and 1")
        bad = (self.values != 0) & (self.values != 1) & (self.values != self.nodata)
        if bad.any():
            raise ValueError("mask pixels must be 0, 1 or nodata")

    @classmethod
    def from_raster(cls, raster: CategoricalRaster) -> "BinaryMask":
        return cls(raster.grid, raster.values, raster.nodata)


def _representable(value: int, dtype: np.dtype) -> bool:
    if dtype.kind == "b":
        return True
    info = np.iinfo(dtype)
    return info.min <= value <= info.max


@dataclass(frozen=True)
class RegionPolygon:
    """Polygon in map units; first ring is the outer boundary, the rest are holes."""

    rings: tuple[tuple[tuple[float, float], ...], ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        rings = []
        for ring in self.rings:
            pts = tuple((float(x), float(y)) for x, y in ring)
            if len(pts) > 1 and pts[0] == pts[-1]:
                pts = pts[:-1]
            if len(pts) < 3:
                raise ValueError("polygon ring needs at least 3 vertices")
            rings.append(pts)
        if not rings:
            raise ValueError("polygon needs at least one ring")
        object.__setattr__(self, "rings", tuple(rings))

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        xs = [x for x, _ in self.rings[0]]
        ys = [y for _, y in self.rings[0]]
        return min(xs), min(ys), max(xs), max(ys)

    def area(self) -> float:
        outer = abs(_shoelace(self.rings[0]))
        holes = sum(abs(_shoelace(r)) for r in self.rings[1:])
        return max(outer - holes, 0.0)

    def edges(self) -> np.ndarray:
        """(n_edges, 4) array of x1, y1, x2, y2 over all rings."""
        out = []
        for ring in self.rings:
            pts = np.asarray(ring, dtype=np.float64)
            nxt = np.roll(pts, -1, axis=0)
            out.append(np.hstack([pts, nxt]))
        return np.vstack(out)

    def contains(self, xs, ys) -> np.ndarray:
        return points_in_polygons([self], xs, ys)


def _shoelace(ring) -> float:
    pts = np.asarray(ring, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _edges_of(polys: Iterable[RegionPolygon]) -> np.ndarray:
    edges = [p.edges() for p in polys]
    return np.vstack(edges) if edges else np.zeros((0, 4))


def points_in_polygons(polys: Sequence[RegionPolygon], xs, ys) -> np.ndarray:
    """Even-odd containment of arbitrary points over all rings of all polygons."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(ys, dtype=np.float64))
    inside = np.zeros(xs.shape, dtype=bool)
    for x1, y1, x2, y2 in _edges_of(polys):
        straddles = (y1 > ys) != (y2 > ys)
        if not straddles.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= straddles & (xs < x_cross)
    return inside


# --- GeoTIFF -----------------------------------------------------------------


def read_geotiff(path, default_nodata: int | None = None) -> CategoricalRaster:
    path = Path(path)
    try:
        tif = tifffile.TiffFile(path)
    except (OSError, tifffile.TiffFileError, ValueError) as exc:
        raise RasterFormatError(f"cannot read {path}: {exc}") from exc
    with tif:
        page = tif.pages[0]
        if page.samplesperpixel != 1 or len(tif.series) != 1 or len(tif.series[0].shape) != 2:
            raise RasterFormatError(f"{path}: unsupported band count")
        if np.dtype(page.dtype).kind not in "iu":
            raise RasterFormatError(f"{path}: non-integer band ({page.dtype})")
        tags = page.tags
        if _TAG_TRANSFORMATION in tags and _TAG_TIEPOINT not in tags:
            raise RasterFormatError(f"{path}: rotated geotransforms are not supported")
        if _TAG_PIXEL_SCALE not in tags or _TAG_TIEPOINT not in tags:
            raise RasterFormatError(f"{path}: missing geotransform")
        sx, sy = tags[_TAG_PIXEL_SCALE].value[:2]
        tie = tags[_TAG_TIEPOINT].value
        i, j, _, x, y, _ = tie[:6]
        values = page.asarray()
        height, width = values.shape
        crs_id = _read_crs(tags)
        raster_type = _geokeys(tags).get(_KEY_RASTER_TYPE, (1,))[0]
        origin_x = x - i * sx
        origin_y = y + j * sy
        if raster_type == 2:  # PixelIsPoint: tiepoint refers to the pixel center
            origin_x -= 0.5 * sx
            origin_y += 0.5 * sy
        if _TAG_GDAL_NODATA in tags:
            text = str(tags[_TAG_GDAL_NODATA].value).strip().rstrip("\x00")
            try:
                nodata = int(float(text))
            except ValueError as exc:
                raise RasterFormatError(f"{path}: bad nodata tag {text!r}") from exc
        elif default_nodata is not None:
            nodata = default_nodata
        else:
            raise RasterFormatError(f"{path}: no nodata tag and no default given")
    grid = GridSpec(float(origin_x), float(origin_y), float(sx), float(sy), width, height, crs_id)
    return CategoricalRaster(grid, values, nodata)


def _geokeys(tags) -> dict[int, tuple]:
    if _TAG_GEOKEYS not in tags:
        return {}
    raw = [int(v) for v in tags[_TAG_GEOKEYS].value]
    ascii_params = str(tags[_TAG_GEOASCII].value) if _TAG_GEOASCII in tags else ""
    keys = {}
    for k in range(raw[3]):
        key_id, location, count, offset = raw[4 + 4 * k: 8 + 4 * k]
        if location == 0:
            keys[key_id] = (offset,)
        elif location == _TAG_GEOASCII:
            keys[key_id] = (ascii_params[offset: offset + count].rstrip("|\x00"),)
    return keys


def _read_crs(tags) -> str:
    keys = _geokeys(tags)
    citation = keys.get(_KEY_CITATION)
    if citation and str(citation[0]).startswith("crs_id="):
        return str(citation[0])[len("crs_id="):]
    for key in (_KEY_PROJECTED_TYPE, _KEY_GEOGRAPHIC_TYPE):
        code = keys.get(key, (0,))[0]
        if isinstance(code, int) and 0 < code < 32767:
            return f"EPSG:{code}"
    return ""


def _epsg_code(crs_id: str) -> int | None:
    if crs_id.upper().startswith("EPSG:"):
        try:
            return int(crs_id.split(":", 1)[1])
        except ValueError:
            return None
    return None


def write_geotiff(raster: CategoricalRaster, path) -> None:
    g = raster.grid
    citation = f"crs_id={g.crs_id}|"
    keys = [(_KEY_RASTER_TYPE, 0, 1, 1), (_KEY_CITATION, _TAG_GEOASCII, len(citation), 0)]
    code = _epsg_code(g.crs_id)
    if code is not None:
        geographic = 4000 <= code < 5000
        keys.append((_KEY_MODEL_TYPE, 0, 1, 2 if geographic else 1))
        keys.append((_KEY_GEOGRAPHIC_TYPE if geographic else _KEY_PROJECTED_TYPE, 0, 1, code))
    keys.sort()
    directory = [1, 1, 0, len(keys)] + [v for key in keys for v in key]
    extratags = [
        (_TAG_PIXEL_SCALE, "d", 3, (g.pixel_w, g.pixel_h, 0.0), True),
        (_TAG_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0), True),
        (_TAG_GEOKEYS, "H", len(directory), directory, True),
        (_TAG_GEOASCII, "s", 0, citation, True),
        (_TAG_GDAL_NODATA, "s", 0, str(raster.nodata), True),
    ]
    try:
        tifffile.imwrite(
            Path(path),
            np.ascontiguousarray(raster.values),
            compression="zlib",
            photometric="minisblack",
            extratags=extratags,
            software=False,
            metadata=None,
        )
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# --- resampling ----------------------------------------------------------------


def _source_indices(src: GridSpec, target: GridSpec):
    cols = np.floor((target.col_centers() - src.origin_x) / src.pixel_w)
    rows = np.floor((src.origin_y - target.row_centers()) / src.pixel_h)
    col_ok = (cols >= 0) & (cols < src.width)
    row_ok = (rows >= 0) & (rows < src.height)
    return (
        np.where(row_ok, rows, 0).astype(np.int64),
        np.where(col_ok, cols, 0).astype(np.int64),
        row_ok,
        col_ok,
    )


def resample_nearest(src: CategoricalRaster, target: GridSpec) -> CategoricalRaster:
    """Give each target pixel the value of the source pixel containing its center."""
    if src.grid.crs_id != target.crs_id:
        raise CRSMismatchError(f"CRS mismatch: {src.grid.crs_id!r} vs {target.crs_id!r}")
    if src.grid == target:
        return src
    rows, cols, row_ok, col_ok = _source_indices(src.grid, target)
    out = src.values[np.ix_(rows, cols)]
    outside = ~(row_ok[:, None] & col_ok[None, :])
    if outside.any():
        out = np.where(outside, np.asarray(src.nodata, dtype=out.dtype), out)
    return type(src)(target, out, src.nodata)


def resample_mode(src: BinaryMask, target: GridSpec) -> BinaryMask:
    """Downsample a mask by majority of the source centers inside each target pixel.

    Nodata sources are ignored; a target pixel with no valid source center is
    nodata; a tie goes to 0.
    """
    if src.grid.crs_id != target.crs_id:
        raise CRSMismatchError(f"CRS mismatch: {src.grid.crs_id!r} vs {target.crs_id!r}")
    if target.pixel_area < src.grid.pixel_area:
        raise ValueError("mode resampling needs target pixels at least as large as source pixels")
    t_rows, t_cols, inside = target.index_of(
        src.grid.col_centers()[None, :].repeat(src.grid.height, 0),
        src.grid.row_centers()[:, None].repeat(src.grid.width, 1),
    )
    values = src.values
    keep = inside & (values != src.nodata)
    flat = (t_rows * target.width + t_cols)[keep]
    n = target.width * target.height
    counted = np.bincount(flat, minlength=n)
    crop = np.bincount(flat[values[keep] == 1], minlength=n)
    out = np.where(2 * crop > counted, 1, 0).astype(src.values.dtype)
    out[counted == 0] = src.nodata
    return BinaryMask(target, out.reshape(target.shape).astype(src.values.dtype), src.nodata)


# --- polygons ------------------------------------------------------------------


def rasterize_polygon(poly, grid: GridSpec) -> BinaryMask:
    """1 where the pixel center is inside the polygon(s) by the even-odd rule.

    ``poly`` is a RegionPolygon or a sequence of them (a multipolygon).
    """
    polys = [poly] if isinstance(poly, RegionPolygon) else list(poly)
    edges = _edges_of(polys)
    xc = grid.col_centers()
    out = np.zeros(grid.shape, dtype=np.uint8)
    for r, y in enumerate(grid.row_centers()):
        y1, y2 = edges[:, 1], edges[:, 3]
        hit = (y1 > y) != (y2 > y)
        if not hit.any():
            continue
        e = edges[hit]
        x_cross = np.sort(e[:, 0] + (y - e[:, 1]) * (e[:, 2] - e[:, 0]) / (e[:, 3] - e[:, 1]))
        # crossings strictly to the right of each center
        right = len(x_cross) - np.searchsorted(x_cross, xc, side="right")
        out[r] = right % 2
    return BinaryMask(grid, out, MASK_NODATA)


def clip(raster: CategoricalRaster, region: BinaryMask) -> CategoricalRaster:
    """Set pixels outside ``region`` (anything but 1) to nodata."""
    require_coregistered(raster.grid, region.grid)
    keep = region.values == 1
    if keep.all():
        return raster
    out = np.where(keep, raster.values, np.asarray(raster.nodata, dtype=raster.values.dtype))
    return raster.with_values(out)


# --- GeoJSON -------------------------------------------------------------------


def _polygons_from_geometry(geom: dict, name: str) -> list[RegionPolygon]:
    kind = geom.get("type")
    if kind == "Polygon":
        return [RegionPolygon(tuple(tuple(map(tuple, r)) for r in geom["coordinates"]), name)]
    if kind == "MultiPolygon":
        return [
            RegionPolygon(tuple(tuple(map(tuple, r)) for r in part), name)
            for part in geom["coordinates"]
        ]
    if kind == "GeometryCollection":
        return [p for g in geom["geometries"] for p in _polygons_from_geometry(g, name)]
    raise ValueError(f"unsupported geometry type {kind!r}")


def read_geojson_regions(path, name_field: str = "name") -> dict[str, list[RegionPolygon]]:
    """Polygons of a GeoJSON document grouped by feature name.

    Unnamed features are keyed by their position.
    """
    doc = json.loads(Path(path).read_text())
    if doc.get("type") == "FeatureCollection":
        features = doc["features"]
    elif doc.get("type") == "Feature":
        features = [doc]
    else:
        features = [{"type": "Feature", "properties": {}, "geometry": doc}]
    regions: dict[str, list[RegionPolygon]] = {}
    for k, feat in enumerate(features):
        props = feat.get("properties") or {}
        name = str(props.get(name_field, k))
        regions.setdefault(name, []).extend(_polygons_from_geometry(feat["geometry"], name))
    return regions


def read_geojson_polygons(path) -> list[RegionPolygon]:
    return [p for polys in read_geojson_regions(path).values() for p in polys]


def grid_covering(polys: Sequence[RegionPolygon], pixel: float, crs_id: str = "") -> GridSpec:
    """Smallest pixel-aligned grid (aligned to multiples of ``pixel``) covering the polygons."""
    xmin = min(p.bbox[0] for p in polys)
    ymin = min(p.bbox[1] for p in polys)
    xmax = max(p.bbox[2] for p in polys)
    ymax = max(p.bbox[3] for p in polys)
    x0 = math.floor(xmin / pixel) * pixel
    y0 = math.ceil(ymax / pixel) * pixel
    width = max(1, math.ceil((xmax - x0) / pixel))
    height = max(1, math.ceil((y0 - ymin) / pixel))
    return GridSpec(x0, y0, pixel, pixel, width, height, crs_id)
