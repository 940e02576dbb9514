"""Per-country pipelines behind the command-line subcommands.

Every command writes its files plus a ``<file>.meta.json`` sidecar. Work on
independent (country, map) cells may run on a thread pool; results are always
merged in configuration order so outputs do not depend on the thread count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import __version__
from .analysis import (
    metric_vs_mismatch,
    metric_vs_resolution,
    masked_timeseries,
    write_correlation_csv,
    write_timeseries_csv,
)
from .assess import (
    METRICS,
    SE_ESTIMATOR,
    SE_MEAN_RULE,
    Evaluation,
    MetricSet,
    aggregate_mean,
    display,
    evaluate_map,
)
from .config import CompositeSource, CountryConfig, RunConfig
from .consensus import (
    AgreementMatrix,
    MaskStack,
    agreement_summary,
    majority_vote,
    mean_and_rank,
    pairwise_agreement,
    render_consensus_png,
    vote_count,
    write_matrix_csv,
)
from .errors import CropCompareError, SchemaError
from .grid import (
    BinaryMask,
    GridSpec,
    RegionPolygon,
    clip,
    rasterize_polygon,
    read_geojson_polygons,
    read_geojson_regions,
    read_geotiff,
    resample_mode,
    resample_nearest,
    write_geotiff,
)
from .plots import lines_svg, scatter_svg
from .productmap import ProductSpec, binarize, frames_in_period, mode_composite
from .reference import (
    RNG_ALGORITHM,
    ReferenceDataset,
    read_reference_csv,
    reference_year,
    stratified_sample,
    uniform_sample,
    write_points_csv,
)

log = logging.getLogger(__name__)

ENSEMBLE = "Majority Vote"
MEAN = "Mean"
METRICS_HEADER = ["country", "map", "metric", "value", "stderr", "n", "excluded"]
MATRIX_HEADER = ["country", "map", "tp", "fp", "fn", "tn"]
FAILURE_HEADER = ["country", "map", "stage", "error"]
SUMMARY_HEADER = ["country", "n_maps", "pct_all_same", "pct_all_crop", "pct_split",
                  "pct_none_crop", "valid_pixels"]

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_TOTAL = 0, 1, 2, 3


@dataclass
class Failure:
    country: str
    map: str
    stage: str
    error: str


@dataclass
class Outcome:
    files: list[Path] = field(default_factory=list)
    failures: list[Failure] = field(default_factory=list)
    succeeded: int = 0

    @property
    def exit_code(self) -> int:
        if not self.failures:
            return EXIT_OK
        return EXIT_PARTIAL if self.succeeded else EXIT_TOTAL


@dataclass
class RunContext:
    """Settings shared by all commands of one invocation."""

    out_dir: Path
    seed: int = 0
    threads: int = 1
    exclude: frozenset[str] = frozenset()
    config: RunConfig | None = None
    command: str = ""

    def pool_map(self, fn: Callable, items: Sequence) -> list:
        if self.threads <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


def slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "unnamed"


def _csv_writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_metadata(ctx: RunContext, path: Path, extra: dict | None = None) -> Path:
    meta = {
        "toolkit": "cropcompare",
        "version": __version__,
        "command": ctx.command,
        "output": path.name,
        "config_sha256": ctx.config.digest if ctx.config else None,
        "seed": ctx.seed,
        "excluded": sorted(ctx.exclude),
        "estimators": {
            "standard_error": SE_ESTIMATOR,
            "standard_error_of_mean": SE_MEAN_RULE,
            "rng": RNG_ALGORITHM,
            "majority_vote": "crop iff votes > N/2; even-N ties non-crop",
            "nodata": "pixel excluded when any input is nodata",
        },
    }
    if extra:
        meta.update(extra)
    side = path.with_name(path.name + ".meta.json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def write_failures(ctx: RunContext, failures: Sequence[Failure], name="failures.csv") -> Path:
    path = ctx.out_dir / name
    with open(path, "w", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(FAILURE_HEADER)
        for f in failures:
            w.writerow([f.country, f.map, f.stage, f.error])
    write_metadata(ctx, path)
    return path


# --- loading -------------------------------------------------------------------


def _read_manifest(path: Path) -> list[tuple[date, Path]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] not in (["date", "path"], ["timestamp", "path"]):
        raise SchemaError(f"{path}: manifest header must be date,path or timestamp,path")
    out = []
    for row in rows[1:]:
        if not row:
            continue
        p = Path(row[1])
        out.append((date.fromisoformat(row[0]), p if p.is_absolute() else path.parent / p))
    return out


class CountryData:
    """Lazily loaded inputs of one configured country."""

    def __init__(self, cfg: RunConfig, name: str, products: dict[str, ProductSpec]):
        self.cfg = cfg
        self.name = name
        self.country: CountryConfig = cfg.countries[name]
        self.products = products
        self._boundary: list[RegionPolygon] | None = None
        self._reference: ReferenceDataset | None = None

    @property
    def boundary(self) -> list[RegionPolygon]:
        if self._boundary is None:
            self._boundary = read_geojson_polygons(self.cfg.resolve(self.country.boundary))
        return self._boundary

    @property
    def reference(self) -> ReferenceDataset:
        if self._reference is None:
            if not self.country.reference:
                raise SchemaError(f"{self.name}: no reference dataset configured")
            self._reference = read_reference_csv(self.cfg.resolve(self.country.reference))
        return self._reference

    def validity_period(self) -> tuple[date, date]:
        if self.country.validity_start and self.country.validity_end:
            return self.country.validity_start, self.country.validity_end
        ref = self.reference
        return ref.validity_start, ref.validity_end

    def map_names(self, exclude: Iterable[str] = ()) -> list[str]:
        """Configured maps ordered finest to coarsest resolution."""
        exclude = set(exclude)
        order = list(self.products)
        names = [m for m in self.country.maps if m not in exclude]
        return sorted(names, key=lambda m: (self.products[m].native_resolution_m, order.index(m)))

    @property
    def target_grid(self) -> GridSpec:
        if self.country.target_grid is None:
            raise SchemaError(f"{self.name}: no target_grid configured")
        return self.country.target_grid.to_grid()

    def load_mask(self, map_name: str) -> BinaryMask:
        """Binarized map at native resolution, clipped to the country boundary."""
        spec = self.products[map_name]
        source = self.country.maps[map_name]
        default_nodata = self.country.default_nodata
        if isinstance(source, CompositeSource):
            start, end = self.validity_period()
            frames = [
                (d, read_geotiff(p, default_nodata=source.nodata or default_nodata))
                for d, p in _read_manifest(self.cfg.resolve(source.frames))
            ]
            frames = frames_in_period(frames, start, end)
            raster = mode_composite(frames)
        else:
            raster = read_geotiff(self.cfg.resolve(source), default_nodata=default_nodata)
            if spec.composite:
                log.info("%s/%s: single raster given for a composite product", self.name, map_name)
        mask = binarize(raster, spec.rule)
        return BinaryMask.from_raster(clip(mask, rasterize_polygon(self.boundary, mask.grid)))

    def on_grid(self, mask: BinaryMask, grid: GridSpec) -> BinaryMask:
        """Nearest-neighbour resample onto ``grid``, clipped to the boundary."""
        resampled = resample_nearest(mask, grid)
        return BinaryMask.from_raster(clip(resampled, rasterize_polygon(self.boundary, grid)))


def _describe(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


_EXPECTED = (CropCompareError, OSError, ValueError, KeyError)


# --- assess --------------------------------------------------------------------


@dataclass
class AssessResult:
    cells: dict[tuple[str, str], Evaluation]
    means: dict[tuple[str, str], tuple[MetricSet, int]]
    outcome: Outcome


def run_assess(ctx: RunContext) -> AssessResult:
    cfg = ctx.config
    products = cfg.products()
    countries = {name: CountryData(cfg, name, products) for name in cfg.countries}
    work = [(c, m) for c, data in countries.items() for m in data.map_names(ctx.exclude)]
    if not work:
        raise SchemaError("no maps configured")
    outcome = Outcome()

    def assess_cell(item):
        country, map_name = item
        data = countries[country]
        try:
            mask = data.load_mask(map_name)
        except _EXPECTED as exc:
            return None, None, Failure(country, map_name, "load", _describe(exc))
        try:
            return mask, evaluate_map(mask, data.reference), None
        except _EXPECTED as exc:
            return mask, None, Failure(country, map_name, "evaluate", _describe(exc))

    # reference datasets and boundaries are read once, before fanning out
    for data in countries.values():
        for attr in ("boundary", "reference"):
            try:
                getattr(data, attr)
            except _EXPECTED:
                pass

    results = dict(zip(work, ctx.pool_map(assess_cell, work)))
    cells: dict[tuple[str, str], Evaluation] = {}
    masks: dict[str, list[tuple[str, BinaryMask]]] = {c: [] for c in countries}
    for key, (mask, evaluation, failure) in results.items():
        if failure:
            outcome.failures.append(failure)
        if mask is not None:
            masks[key[0]].append((key[1], mask))
        if evaluation is not None:
            cells[key] = evaluation

    def ensemble_cell(country):
        data = countries[country]
        try:
            if len(masks[country]) < 2:
                raise ValueError("majority vote needs at least two loaded maps")
            grid = data.target_grid
            stack = MaskStack(
                tuple(data.on_grid(m, grid) for _, m in masks[country]),
                tuple(n for n, _ in masks[country]),
            )
            return evaluate_map(majority_vote(stack), data.reference), None
        except _EXPECTED as exc:
            return None, Failure(country, ENSEMBLE, "ensemble", _describe(exc))

    if ENSEMBLE not in ctx.exclude:
        for country, (evaluation, failure) in zip(countries, ctx.pool_map(ensemble_cell, list(countries))):
            if failure:
                outcome.failures.append(failure)
            else:
                cells[(country, ENSEMBLE)] = evaluation

    outcome.succeeded = len(cells)
    means = _means(countries, cells)
    out = ctx.out_dir
    outcome.files += [
        _write_metrics(ctx, out / "metrics.csv", countries, cells, means),
        _write_display(ctx, out / "metrics_display.csv", countries, cells, means),
        _write_error_matrices(ctx, out / "error_matrices.csv", countries, cells),
        write_failures(ctx, outcome.failures),
    ]
    return AssessResult(cells, means, outcome)


def _row_maps(countries: dict[str, CountryData], cells) -> list[str]:
    names = []
    for c, data in countries.items():
        for m in [ENSEMBLE, *data.map_names()]:
            if (c, m) in cells and m not in names:
                names.append(m)
    return names


def _means(countries, cells):
    means = {}
    for c in countries:
        sets = [e.metrics for (cc, _), e in cells.items() if cc == c]
        if sets:
            means[(c, MEAN)] = (aggregate_mean(sets), len(sets))
    for m in _row_maps(countries, cells):
        sets = [cells[(c, m)].metrics for c in countries if (c, m) in cells]
        means[(MEAN, m)] = (aggregate_mean(sets), len(sets))
    return means


def _ordered_keys(countries, cells, means):
    for c, data in countries.items():
        for m in [ENSEMBLE, *data.map_names(), MEAN]:
            if (c, m) in cells or (c, m) in means:
                yield c, m
    for m in _row_maps(countries, cells):
        yield MEAN, m


def _write_metrics(ctx, path, countries, cells, means) -> Path:
    with open(path, "w", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(METRICS_HEADER)
        for key in _ordered_keys(countries, cells, means):
            if key in cells:
                ev = cells[key]
                metrics, n, excluded = ev.metrics, ev.matrix.n, ev.excluded
            else:
                (metrics, n), excluded = means[key], 0
            for metric in METRICS:
                w.writerow([*key, metric, repr(metrics.value(metric)),
                            repr(metrics.stderr(metric)), n, excluded])
    write_metadata(ctx, path, {"mean_rows": "n is the number of averaged cells"})
    return path


def _write_display(ctx, path, countries, cells, means) -> Path:
    with open(path, "w", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(["country", "map", "metric", "display", "degenerate"])
        for key in _ordered_keys(countries, cells, means):
            metrics = cells[key].metrics if key in cells else means[key][0]
            for metric in METRICS:
                w.writerow([*key, metric, display(metrics, metric),
                            int(metric in metrics.degenerate)])
    write_metadata(ctx, path)
    return path


def _write_error_matrices(ctx, path, countries, cells) -> Path:
    with open(path, "w", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(MATRIX_HEADER)
        for c, data in countries.items():
            for m in [ENSEMBLE, *data.map_names()]:
                if (c, m) in cells:
                    e = cells[(c, m)].matrix
                    w.writerow([c, m, e.tp, e.fp, e.fn, e.tn])
    write_metadata(ctx, path)
    return path


# --- consensus / ensemble ------------------------------------------------------


def _country_stack(ctx: RunContext, data: CountryData, failures: list[Failure]) -> MaskStack:
    grid = data.target_grid
    names = data.map_names(ctx.exclude)

    def load(name):
        try:
            return name, data.on_grid(data.load_mask(name), grid)
        except _EXPECTED as exc:
            failures.append(Failure(data.name, name, "load", _describe(exc)))
            return name, None

    loaded = [(n, m) for n, m in ctx.pool_map(load, names) if m is not None]
    if len(loaded) < 2:
        raise ValueError(f"{data.name}: fewer than two maps could be loaded")
    return MaskStack(tuple(m for _, m in loaded), tuple(n for n, _ in loaded))


def _selected_countries(cfg: RunConfig, country: str | None) -> list[str]:
    if country is None:
        return list(cfg.countries)
    if country not in cfg.countries:
        raise SchemaError(f"unknown country {country!r}; available: {sorted(cfg.countries)}")
    return [country]


def run_consensus(ctx: RunContext, country: str | None = None, with_ensemble: bool = False) -> Outcome:
    cfg = ctx.config
    products = cfg.products()
    outcome = Outcome()
    summaries = []
    matrices: list[tuple[str, AgreementMatrix]] = []
    for name in _selected_countries(cfg, country):
        data = CountryData(cfg, name, products)
        stem = slug(name)
        try:
            maps = _country_stack(ctx, data, outcome.failures)
            votes = vote_count(maps)
            summary = agreement_summary(maps)
            stack = maps
            if with_ensemble:
                stack = MaskStack(maps.masks + (majority_vote(maps),), maps.names + (ENSEMBLE,))
            matrix = pairwise_agreement(stack)
        except _EXPECTED as exc:
            outcome.failures.append(Failure(name, "", "consensus", _describe(exc)))
            continue
        tif = ctx.out_dir / f"consensus_{stem}.tif"
        write_geotiff(votes.raster, tif)
        write_metadata(ctx, tif, {"country": name, "maps": list(maps.names)})
        png = ctx.out_dir / f"consensus_{stem}.png"
        render_consensus_png(votes, png)
        write_metadata(ctx, png, {"country": name, "ramp": "red(0) -> yellow(N/2) -> blue(N)"})
        mpath = ctx.out_dir / f"agreement_{stem}.csv"
        write_matrix_csv(matrix.names, matrix.values, mpath)
        write_metadata(ctx, mpath, {"country": name})
        outcome.files += [tif, png, mpath]
        summaries.append((name, votes.n_masks, summary))
        matrices.append((name, matrix))
        outcome.succeeded += 1

    spath = ctx.out_dir / "agreement_summary.csv"
    with open(spath, "w", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(SUMMARY_HEADER)
        for name, n, s in summaries:
            w.writerow([name, n, repr(s.pct_all_same), repr(s.pct_all_crop), repr(s.pct_split),
                        repr(s.pct_none_crop), s.valid_pixel_count])
    write_metadata(ctx, spath)
    outcome.files.append(spath)

    if matrices:
        names = matrices[0][1].names
        same = [m for _, m in matrices if m.names == names]
        if len(same) == len(matrices):
            mean, rank = mean_and_rank(same)
            for fname, values in (("agreement_mean.csv", mean.values), ("agreement_rank.csv", rank)):
                path = ctx.out_dir / fname
                write_matrix_csv(names, values, path)
                write_metadata(ctx, path, {"countries": [c for c, _ in matrices]})
                outcome.files.append(path)
        else:
            outcome.failures.append(
                Failure(MEAN, "", "agreement_mean", "countries have different map sets")
            )
    outcome.files.append(write_failures(ctx, outcome.failures, "consensus_failures.csv"))
    return outcome


def run_ensemble(ctx: RunContext, country: str | None = None) -> Outcome:
    cfg = ctx.config
    products = cfg.products()
    outcome = Outcome()
    for name in _selected_countries(cfg, country):
        data = CountryData(cfg, name, products)
        try:
            stack = _country_stack(ctx, data, outcome.failures)
        except _EXPECTED as exc:
            outcome.failures.append(Failure(name, ENSEMBLE, "ensemble", _describe(exc)))
            continue
        path = ctx.out_dir / f"majority_vote_{slug(name)}.tif"
        write_geotiff(majority_vote(stack), path)
        write_metadata(ctx, path, {"country": name, "maps": list(stack.names)})
        outcome.files.append(path)
        outcome.succeeded += 1
    outcome.files.append(write_failures(ctx, outcome.failures, "ensemble_failures.csv"))
    return outcome


# --- correlate -----------------------------------------------------------------


def read_metrics_csv(path) -> dict[tuple[str, str], dict[str, float]]:
    table: dict[tuple[str, str], dict[str, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRICS_HEADER:
            raise SchemaError(f"{path}: expected header {','.join(METRICS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(METRICS_HEADER):
                raise SchemaError(f"{path}:{lineno}: expected {len(METRICS_HEADER)} fields")
            country, map_name, metric, value = row[:4]
            if metric not in METRICS:
                raise SchemaError(f"{path}:{lineno}: unknown metric {metric!r}")
            try:
                table.setdefault((country, map_name), {})[metric] = float(value)
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: bad value {value!r}") from exc
    incomplete = [k for k, v in table.items() if set(v) != set(METRICS)]
    if incomplete:
        raise SchemaError(f"{path}: rows missing metrics for {incomplete}")
    return table


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("cropcompare").joinpath(f"data/{name}")))


def read_reference_periods(path) -> dict[str, int]:
    """Reference year per country from a table with validity_start/validity_end columns."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"country", "validity_start", "validity_end"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: needs country, validity_start, validity_end columns")
        return {
            row["country"]: reference_year(date.fromisoformat(row["validity_start"]),
                                           date.fromisoformat(row["validity_end"]))
            for row in reader
        }


def run_correlate(
    ctx: RunContext,
    metrics_path: Path,
    products: dict[str, ProductSpec],
    reference_years: dict[str, int] | None,
) -> tuple[Outcome, dict]:
    table = read_metrics_csv(metrics_path)
    exclude = set(ctx.exclude) | {ENSEMBLE, MEAN}
    per_map: dict[str, dict[str, float]] = {}
    mean_rows = {m: v for (c, m), v in table.items() if c == MEAN}
    per_country = {(c, m): v for (c, m), v in table.items() if c != MEAN and m not in (MEAN,)}
    if mean_rows:
        per_map = dict(mean_rows)
    else:
        for (_, m), values in per_country.items():
            per_map.setdefault(m, {})
        for m in per_map:
            rows = [v for (_, mm), v in per_country.items() if mm == m]
            per_map[m] = {k: sum(r[k] for r in rows) / len(rows) for k in METRICS}
    per_map = {m: v for m, v in per_map.items() if m not in (ENSEMBLE, MEAN)}
    unknown = sorted(m for m in per_map if m not in products and m not in exclude)
    if unknown:
        raise SchemaError(f"maps without a product spec: {unknown}")
    reported_exclude = sorted(set(ctx.exclude) - {ENSEMBLE, MEAN})
    by_res = metric_vs_resolution(per_map, products, exclude)
    by_res = {k: _with_excluded(v, reported_exclude) for k, v in by_res.items()}
    outcome = Outcome()
    path = ctx.out_dir / "correlation_resolution.csv"
    write_correlation_csv(by_res.values(), path)
    write_metadata(ctx, path, {"source": str(metrics_path.name), "x": "native_resolution_m",
                               "coefficient": "signed Pearson r"})
    outcome.files.append(path)
    for metric, res in by_res.items():
        svg = ctx.out_dir / f"correlation_resolution_{metric}.svg"
        pts = [(products[m].native_resolution_m, v[metric], m) for m, v in per_map.items()
               if m not in exclude]
        scatter_svg(pts, svg, title=f"{metric} vs resolution (r = {res.r:.2f})",
                    xlabel="resolution (m/px)", ylabel=metric)
        write_metadata(ctx, svg, {"r": res.r, "n": res.n_points})
        outcome.files.append(svg)
    results = {"resolution": by_res}

    mismatch_table = {k: v for k, v in per_country.items() if k[1] not in exclude}
    if reference_years is not None and mismatch_table:
        missing = sorted({c for c, _ in mismatch_table if c not in reference_years})
        if missing:
            raise SchemaError(f"no reference period for countries {missing}")

        def year_of(name, ref_year):
            return products[name].year_for(ref_year)

        by_gap = metric_vs_mismatch(mismatch_table, year_of, reference_years, exclude)
        by_gap = {k: _with_excluded(v, reported_exclude) for k, v in by_gap.items()}
        path = ctx.out_dir / "correlation_mismatch.csv"
        write_correlation_csv(by_gap.values(), path)
        write_metadata(ctx, path, {"source": str(metrics_path.name), "x": "temporal mismatch (years)",
                                   "coefficient": "signed Pearson r",
                                   "reference_years": reference_years})
        outcome.files.append(path)
        for metric, res in by_gap.items():
            svg = ctx.out_dir / f"correlation_mismatch_{metric}.svg"
            pts = [(abs(year_of(m, reference_years[c]) - reference_years[c]), v[metric], f"{c}/{m}")
                   for (c, m), v in mismatch_table.items()]
            scatter_svg(pts, svg, title=f"{metric} vs temporal mismatch (r = {res.r:.2f})",
                        xlabel="mismatch (years)", ylabel=metric)
            write_metadata(ctx, svg, {"r": res.r, "n": res.n_points})
            outcome.files.append(svg)
        results["mismatch"] = by_gap
    outcome.succeeded = 1
    return outcome, results


def _with_excluded(res, excluded):
    return replace(res, excluded=tuple(excluded))


# --- time series ---------------------------------------------------------------


def run_timeseries(ctx: RunContext, country: str, region: str | None = None) -> Outcome:
    cfg = ctx.config
    products = cfg.products()
    [name] = _selected_countries(cfg, country)
    data = CountryData(cfg, name, products)
    if not data.country.ndvi_frames:
        raise SchemaError(f"{name}: no ndvi_frames manifest configured")
    if region is None:
        polys, region_name = data.boundary, name
    else:
        if not data.country.regions:
            raise SchemaError(f"{name}: no regions file configured; cannot select {region!r}")
        regions = read_geojson_regions(cfg.resolve(data.country.regions), data.country.region_name_field)
        if region not in regions:
            raise SchemaError(f"unknown region {region!r}; available regions: {sorted(regions)}")
        polys, region_name = regions[region], region
    frames = [
        (d, read_geotiff(p, default_nodata=data.country.default_nodata))
        for d, p in _read_manifest(cfg.resolve(data.country.ndvi_frames))
    ]
    if not frames:
        raise SchemaError(f"{name}: NDVI manifest lists no frames")
    grid = frames[0][1].grid
    region_mask = rasterize_polygon(polys, grid)
    outcome = Outcome()

    def series_for(map_name):
        try:
            mask = data.load_mask(map_name)
            if grid.pixel_area >= mask.grid.pixel_area:
                on_frames = resample_mode(mask, grid)
            else:
                on_frames = resample_nearest(mask, grid)
            return masked_timeseries(frames, on_frames, region_mask, data.country.ndvi_scale,
                                     map_name, region_name), None
        except _EXPECTED as exc:
            return None, Failure(name, map_name, "timeseries", _describe(exc))

    series = []
    for ts, failure in ctx.pool_map(series_for, data.map_names(ctx.exclude)):
        if failure:
            outcome.failures.append(failure)
        else:
            series.append(ts)
    outcome.succeeded = len(series)
    stem = slug(name) if region is None else f"{slug(name)}_{slug(region)}"
    path = ctx.out_dir / f"timeseries_{stem}.csv"
    write_timeseries_csv(series, path)
    write_metadata(ctx, path, {"country": name, "region": region_name,
                               "mask_resampling": "mode when frame pixels are coarser, else nearest",
                               "scale": data.country.ndvi_scale})
    svg = ctx.out_dir / f"timeseries_{stem}.svg"
    lines_svg({ts.mask_name: [(e.timestamp.toordinal(), e.mean) for e in ts.entries] for ts in series},
              svg, title=f"masked mean NDVI, {region_name}", xlabel="date (ordinal day)", ylabel="mean")
    write_metadata(ctx, svg, {"country": name, "region": region_name})
    outcome.files += [path, svg, write_failures(ctx, outcome.failures, f"timeseries_failures_{stem}.csv")]
    return outcome


# --- sampling ------------------------------------------------------------------


def parse_allocation(text: str) -> dict[int, int]:
    try:
        pairs = [item.split(":") for item in text.split(",") if item.strip()]
        return {int(k): int(v) for k, v in pairs}
    except ValueError as exc:
        raise SchemaError(f"bad allocation {text!r}; expected stratum:count,...") from exc


def run_sample(ctx: RunContext, country: str, design: str, n: int | None = None,
               allocation: dict[int, int] | None = None) -> Outcome:
    cfg = ctx.config
    [name] = _selected_countries(cfg, country)
    data = CountryData(cfg, name, cfg.products())
    if design == "uniform":
        if not n:
            raise SchemaError("uniform design needs --n")
        points = uniform_sample(data.boundary, n, ctx.seed)
        with_stratum = False
        extra = {"design": "uniform", "n": n}
    elif design == "stratified":
        if not data.country.strata:
            raise SchemaError(f"{name}: no strata raster configured")
        if not allocation:
            raise SchemaError("stratified design needs --allocation")
        strata = read_geotiff(cfg.resolve(data.country.strata), default_nodata=data.country.default_nodata)
        points = stratified_sample(strata, allocation, ctx.seed)
        with_stratum = True
        extra = {"design": "stratified", "allocation": {str(k): v for k, v in allocation.items()}}
    else:
        raise SchemaError(f"unknown design {design!r}")
    path = ctx.out_dir / f"sample_{slug(name)}_{design}.csv"
    write_points_csv(points, path, with_stratum=with_stratum)
    write_metadata(ctx, path, {"country": name, **extra})
    return Outcome(files=[path], succeeded=1)


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
