"""Synthetic end-to-end fixture: two small countries with all eleven products.

Every product is derived from one shared crop/non-crop "truth" field defined in
world coordinates, sampled at the product's native resolution and legend, with
product-specific error patches. Run ``python -m cropcompare.synthetic DIR`` to
write a fixture and its ``config.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .grid import CategoricalRaster, GridSpec, RegionPolygon, grid_covering, write_geotiff
from .productmap import load_product_registry
from .reference import ReferenceDataset, make_rng, uniform_sample, write_reference_csv

CRS = "EPSG:32636"
EXTENT_M = 3000.0
FIELD_CELL_M = 150.0
TARGET_PIXEL_M = 10.0
NDVI_PIXEL_M = 500.0
NDVI_NODATA = -32768
NDVI_SCALE = 0.0001

# native legend used to encode the truth for each product: (crop code, other codes)
_LEGENDS = {
    "DEA": (1, (0,)),
    "Dynamic World": (4, (1, 2, 5)),
    "Esri": (5, (1, 2, 7)),
    "WorldCover": (40, (10, 30, 50)),
    "ESA-CCI": (4, (1, 2, 3)),
    "GFSAD": (2, (1,)),
    "Nabil": (1, (0,)),
    "GLAD": (1, (0,)),
    "Copernicus": (40, (20, 30, 50)),
    "GlobCover": (14, (40, 130, 200)),
}
# fraction of each product's pixels that are flipped against the truth
_ERROR_RATE = {
    "DEA": 0.04, "Dynamic World": 0.08, "Esri": 0.05, "WorldCover": 0.06, "ESA-CCI": 0.10,
    "GFSAD": 0.08, "Nabil": 0.09, "GLAD": 0.07, "Copernicus": 0.10, "GlobCover": 0.25,
    "ASAP": 0.0,
}

COUNTRIES = {
    "Alpha": {"offset": (500000.0, 100000.0), "period": (date(2019, 1, 1), date(2019, 12, 31))},
    "Beta": {"offset": (520000.0, 110000.0), "period": (date(2019, 2, 1), date(2020, 1, 31))},
}


class TruthField:
    """Blocky crop fields on a square lattice anchored at ``origin``.

    The western part is intensively cropped; the eastern third is mostly
    natural cover, so coarse products see both mixed and near-empty pixels.
    """

    def __init__(self, origin: tuple[float, float], rng: np.random.Generator,
                 crop_share=0.5, sparse_share=0.02):
        self.x0, self.y0 = origin
        n = int(EXTENT_M // FIELD_CELL_M) + 2
        share = np.where(np.arange(n) < (2 * n) // 3, crop_share, sparse_share)
        self.cells = (rng.random((n, n)) < share[None, :]).astype(np.uint8)

    def at(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        c = np.clip(np.floor((xs - self.x0) / FIELD_CELL_M).astype(np.int64), 0, self.cells.shape[1] - 1)
        r = np.clip(np.floor((self.y0 - ys) / FIELD_CELL_M).astype(np.int64), 0, self.cells.shape[0] - 1)
        return self.cells[r, c]

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        xs, ys = np.meshgrid(grid.col_centers(), grid.row_centers())
        return self.at(xs, ys)

    def fraction_on_grid(self, grid: GridSpec, sub: int = 20) -> np.ndarray:
        """Crop share (0..1) of each pixel, from a sub x sub lattice of samples."""
        offs = (np.arange(sub) + 0.5) / sub
        total = np.zeros(grid.shape, dtype=np.float64)
        xc = grid.origin_x + np.arange(grid.width) * grid.pixel_w
        yc = grid.origin_y - np.arange(grid.height) * grid.pixel_h
        for fy in offs:
            for fx in offs:
                xs, ys = np.meshgrid(xc + fx * grid.pixel_w, yc - fy * grid.pixel_h)
                total += self.at(xs, ys)
        return total / (sub * sub)


def _boundary(x0: float, y0: float) -> RegionPolygon:
    # irregular octagon inside the [x0, x0+E] x [y0-E, y0] square
    e = EXTENT_M
    ring = [
        (x0 + 0.25 * e, y0), (x0 + 0.8 * e, y0 - 0.02 * e), (x0 + e, y0 - 0.3 * e),
        (x0 + 0.97 * e, y0 - 0.75 * e), (x0 + 0.7 * e, y0 - e), (x0 + 0.2 * e, y0 - 0.96 * e),
        (x0 + 0.01 * e, y0 - 0.65 * e), (x0 + 0.05 * e, y0 - 0.2 * e),
    ]
    return RegionPolygon((tuple(ring),))


def _rectangle(xa, ya, xb, yb) -> RegionPolygon:
    return RegionPolygon((((xa, ya), (xb, ya), (xb, yb), (xa, yb)),))


def _geojson(features: list[tuple[str, RegionPolygon]]) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"name": name},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[list(v) for v in (*ring, ring[0])] for ring in poly.rings],
                },
            }
            for name, poly in features
        ],
    }


def _flip_patches(rng, shape, rate) -> np.ndarray:
    """Boolean error mask built from rectangular patches, so errors are spatially clustered."""
    flip = np.zeros(shape, dtype=bool)
    if rate <= 0:
        return flip
    target = int(round(rate * flip.size))
    while flip.sum() < target:
        r = rng.integers(shape[0])
        c = rng.integers(shape[1])
        h = max(1, shape[0] // 20)
        w = max(1, shape[1] // 20)
        flip[r:r + h, c:c + w] = True
    return flip


def _encode(truth01: np.ndarray, legend, rng) -> np.ndarray:
    crop, others = legend
    out = rng.choice(np.asarray(others, dtype=np.uint8), size=truth01.shape)
    out[truth01 == 1] = crop
    return out.astype(np.uint8)


def _product_raster(name, spec, truth: TruthField, boundary, rng) -> CategoricalRaster:
    grid = grid_covering([boundary], spec.native_resolution_m, CRS)
    if name == "ASAP":
        pct = np.round(truth.fraction_on_grid(grid) * 100).astype(np.uint8)
        return CategoricalRaster(grid, pct, 255)
    t = truth.on_grid(grid)
    t = np.where(_flip_patches(rng, t.shape, _ERROR_RATE[name]), 1 - t, t)
    values = _encode(t, _LEGENDS[name], rng)
    # a thin nodata strip along the top edge of each raster
    values[0, : max(1, grid.width // 4)] = 255
    return CategoricalRaster(grid, values, 255)


def _write_manifest(path: Path, rows: list[tuple[date, str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "path"])
        for d, p in rows:
            w.writerow([d.isoformat(), p])


def build_fixture(root, seed: int = 0, n_points: int = 80) -> Path:
    """Write the fixture under ``root`` and return the path of its config."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)
    specs = {s.name: s for s in load_product_registry()}
    config = {"output_dir": "out", "seed": seed, "countries": {}}
    for country, info in COUNTRIES.items():
        x0, y0 = info["offset"]
        start, end = info["period"]
        cdir = root / country.lower()
        cdir.mkdir(exist_ok=True)
        truth = TruthField((x0, y0), rng)
        boundary = _boundary(x0, y0)
        (cdir / "boundary.geojson").write_text(json.dumps(_geojson([(country, boundary)])))
        west = _rectangle(x0, y0, x0 + EXTENT_M / 2, y0 - EXTENT_M)
        east = _rectangle(x0 + EXTENT_M / 2, y0, x0 + EXTENT_M, y0 - EXTENT_M)
        (cdir / "regions.geojson").write_text(json.dumps(_geojson([("West", west), ("East", east)])))

        maps: dict[str, object] = {}
        for name, spec in specs.items():
            fname = f"{name.lower().replace(' ', '_')}.tif"
            if spec.composite:
                frames = []
                stamps = [start + timedelta(days=60 * k) for k in range(5)] + [end + timedelta(days=30)]
                for k, stamp in enumerate(stamps):
                    raster = _product_raster(name, spec, truth, boundary, rng)
                    frame_name = f"{fname[:-4]}_{k}.tif"
                    write_geotiff(raster, cdir / frame_name)
                    frames.append((stamp, frame_name))
                _write_manifest(cdir / "dynamic_world_frames.csv", frames)
                maps[name] = {"frames": "dynamic_world_frames.csv"}
            else:
                write_geotiff(_product_raster(name, spec, truth, boundary, rng), cdir / fname)
                maps[name] = fname

        pts = uniform_sample([boundary], n_points, seed + 1)
        ds = ReferenceDataset(pts[:, 0], pts[:, 1], truth.at(pts[:, 0], pts[:, 1]), country, start, end)
        write_reference_csv(ds, cdir / "reference.csv")

        ndvi_grid = grid_covering([boundary], NDVI_PIXEL_M, CRS)
        ndvi_rows = []
        for k in range(6):
            stamp = start + timedelta(days=16 * k)
            base = truth.fraction_on_grid(ndvi_grid, sub=10)
            values = (2000 + 5000 * base + rng.normal(0, 300, ndvi_grid.shape)).astype(np.int16)
            values[0, 0] = NDVI_NODATA
            write_geotiff(CategoricalRaster(ndvi_grid, values, NDVI_NODATA), cdir / f"ndvi_{k}.tif")
            ndvi_rows.append((stamp, f"ndvi_{k}.tif"))
        _write_manifest(cdir / "ndvi_frames.csv", ndvi_rows)

        strata_grid = grid_covering([boundary], 30.0, CRS)
        frac = truth.fraction_on_grid(strata_grid, sub=3)
        noise = rng.random(strata_grid.shape)
        strata = (1 + (frac + 0.3 * noise > 0.5) + (frac + 0.3 * noise > 0.9)).astype(np.uint8)
        write_geotiff(CategoricalRaster(strata_grid, strata, 0), cdir / "strata.tif")

        target = grid_covering([boundary], TARGET_PIXEL_M, CRS)
        config["countries"][country] = {
            "boundary": f"{cdir.name}/boundary.geojson",
            "reference": f"{cdir.name}/reference.csv",
            "maps": {
                k: (f"{cdir.name}/{v}" if isinstance(v, str) else {"frames": f"{cdir.name}/{v['frames']}"})
                for k, v in maps.items()
            },
            "target_grid": target.to_dict(),
            "ndvi_frames": f"{cdir.name}/ndvi_frames.csv",
            "ndvi_scale": NDVI_SCALE,
            "regions": f"{cdir.name}/regions.geojson",
            "strata": f"{cdir.name}/strata.tif",
        }
    path = root / "config.json"
    path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return path


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description="write the synthetic fixture")
    parser.add_argument("root", type=Path)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--points", type=int, default=80)
    args = parser.parse_args(argv)
    print(build_fixture(args.root, args.seed, args.points))


if __name__ == "__main__":
    main()
