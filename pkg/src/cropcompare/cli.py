"""Command-line front end: ``cropcompare <subcommand> --config run.json``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import CropCompareError, SchemaError
from .pipeline import (
    EXIT_CONFIG,
    EXIT_TOTAL,
    CountryData,
    RunContext,
    bundled_path,
    parse_allocation,
    read_reference_periods,
    run_assess,
    run_consensus,
    run_correlate,
    run_ensemble,
    run_sample,
    run_timeseries,
)
from .productmap import load_product_registry
from .reference import reference_year

log = logging.getLogger("cropcompare")


def _names(text: str | None) -> frozenset[str]:
    return frozenset(n.strip() for n in (text or "").split(",") if n.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cropcompare", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, config_required=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=config_required, help="run configuration JSON")
        p.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
        p.add_argument("--seed", type=int, help="RNG seed (default: config seed)")
        p.add_argument("--exclude", default="", help="comma-separated map names to leave out")
        p.add_argument("--threads", type=int, default=1)
        return p

    add("assess", "score every (country, map) against its reference points")
    p = add("consensus", "vote counts, agreement summary and pairwise agreement")
    p.add_argument("--country")
    p.add_argument("--with-ensemble", action="store_true",
                   help="add the majority vote map as an extra agreement row/column")
    p = add("ensemble", "write the majority vote map per country")
    p.add_argument("--country")
    p = add("correlate", "correlate metrics with resolution and temporal mismatch",
            config_required=False)
    p.add_argument("--metrics", type=Path,
                   help="metrics CSV (default: run assess from --config, else the bundled table)")
    p.add_argument("--registry", type=Path, help="product registry JSON (default: bundled)")
    p.add_argument("--reference-periods", type=Path,
                   help="CSV with country,validity_start,validity_end (default: bundled)")
    p = add("timeseries", "masked mean of index frames per map")
    p.add_argument("--country", required=True)
    p.add_argument("--region")
    p = add("sample", "draw reference point locations")
    p.add_argument("--country", required=True)
    p.add_argument("--design", choices=["uniform", "stratified"], required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--allocation", help="stratum:count pairs, e.g. 1:5,2:5")
    return parser


def _context(args, cfg) -> RunContext:
    out = args.out
    if out is None:
        out = cfg.resolve(cfg.output_dir) if cfg else Path("out")
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    if args.threads < 1:
        raise SchemaError("--threads must be at least 1")
    return RunContext(out_dir=out, seed=seed, threads=args.threads, exclude=_names(args.exclude),
                      config=cfg, command=args.command)


def _correlate(args, cfg, ctx):
    if args.registry:
        products = {s.name: s for s in load_product_registry(args.registry)}
    elif cfg:
        products = cfg.products()
    else:
        products = {s.name: s for s in load_product_registry()}
    if args.metrics:
        metrics = args.metrics
    elif cfg:
        run_assess(ctx)
        metrics = ctx.out_dir / "metrics.csv"
    else:
        metrics = bundled_path("published_metrics.csv")
    periods = args.reference_periods or bundled_path("reference_periods.csv")
    years = read_reference_periods(periods)
    if cfg:
        # configured validity periods (or the reference file's) override the table
        for name, country in cfg.countries.items():
            if (country.validity_start and country.validity_end) or country.reference:
                years[name] = reference_year(*CountryData(cfg, name, products).validity_period())
    outcome, _ = run_correlate(ctx, Path(metrics), products, years)
    return outcome


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else None
        ctx = _context(args, cfg)
        if args.command == "assess":
            outcome = run_assess(ctx).outcome
        elif args.command == "consensus":
            outcome = run_consensus(ctx, args.country, args.with_ensemble)
        elif args.command == "ensemble":
            outcome = run_ensemble(ctx, args.country)
        elif args.command == "correlate":
            outcome = _correlate(args, cfg, ctx)
        elif args.command == "timeseries":
            outcome = run_timeseries(ctx, args.country, args.region)
        else:
            allocation = parse_allocation(args.allocation) if args.allocation else None
            outcome = run_sample(ctx, args.country, args.design, args.n, allocation)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CropCompareError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOTAL
    for f in outcome.failures:
        print(f"failed: {f.country}/{f.map} [{f.stage}] {f.error}", file=sys.stderr)
    for path in outcome.files:
        log.info("wrote %s", path)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
