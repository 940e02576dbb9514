import csv
import json
from pathlib import Path

import numpy as np
import pytest

from cropcompare.cli import main
from cropcompare.config import load_config
from cropcompare.errors import SchemaError
from cropcompare.grid import read_geotiff
from cropcompare.pipeline import METRICS_HEADER, read_metrics_csv

PATH_KEYS = ("boundary", "reference", "ndvi_frames", "regions", "strata")


def variant(config_path: Path, tmp_path: Path, mutate=None, name="run.json") -> Path:
    """Copy of the fixture config with absolute paths, optionally edited."""
    root = config_path.parent
    doc = json.loads(config_path.read_text())
    for country in doc["countries"].values():
        for key in PATH_KEYS:
            if country.get(key):
                country[key] = str(root / country[key])
        for m, src in country["maps"].items():
            country["maps"][m] = str(root / src) if isinstance(src, str) else {"frames": str(root / src["frames"])}
    if mutate:
        mutate(doc)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def keep_maps(names, countries=("Alpha",)):
    def mutate(doc):
        doc["countries"] = {c: doc["countries"][c] for c in countries}
        for c in doc["countries"].values():
            c["maps"] = {k: v for k, v in c["maps"].items() if k in names}
    return mutate


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def snapshot(out: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


# --- config ------------------------------------------------------------------


def test_config_loads_fixture(fixture_config):
    cfg = load_config(fixture_config)
    assert sorted(cfg.countries) == ["Alpha", "Beta"] and len(cfg.digest) == 64
    assert len(cfg.countries["Alpha"].maps) == 11


@pytest.mark.parametrize("doc", ['{"countries": {"X": {}}}', "[1, 2]", "{not json",
                                 '{"countries": {}, "typo": 1}'])
def test_config_schema_errors(tmp_path, doc):
    (tmp_path / "c.json").write_text(doc)
    with pytest.raises(SchemaError):
        load_config(tmp_path / "c.json")


def test_config_unknown_map(tmp_path):
    doc = {"countries": {"X": {"boundary": "b.geojson", "maps": {"NotAMap": "x.tif"}}}}
    (tmp_path / "c.json").write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="NotAMap"):
        load_config(tmp_path / "c.json")


def test_config_map_year_override(fixture_config, tmp_path):
    path = variant(fixture_config, tmp_path, lambda d: d.update(map_years={"Esri": 2020}))
    assert load_config(path).products()["Esri"].year_for(2019) == 2020


# --- exit codes ----------------------------------------------------------------


def test_missing_config_is_config_error(tmp_path):
    assert main(["assess", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 1


def test_no_maps_configured(fixture_config, tmp_path, capsys):
    path = variant(fixture_config, tmp_path, keep_maps(()))
    assert main(["assess", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "no maps configured" in capsys.readouterr().err


def test_bad_threads(fixture_config, tmp_path):
    assert main(["assess", "--config", str(fixture_config), "--out", str(tmp_path), "--threads", "0"]) == 1


def test_missing_raster_is_partial_failure(fixture_config, tmp_path):
    def mutate(doc):
        keep_maps({"DEA", "GLAD", "Esri"})(doc)
        doc["countries"]["Alpha"]["maps"]["Esri"] = str(tmp_path / "missing.tif")
    path = variant(fixture_config, tmp_path, mutate)
    out = tmp_path / "o"
    assert main(["assess", "--config", str(path), "--out", str(out)]) == 2
    fails = rows(out / "failures.csv")
    assert fails[0] == ["country", "map", "stage", "error"]
    assert [r[:2] for r in fails[1:]] == [["Alpha", "Esri"]]
    maps = {r[1] for r in rows(out / "metrics.csv")[1:]}
    assert {"DEA", "GLAD"} <= maps and "Esri" not in maps


def test_every_map_missing_is_total_failure(fixture_config, tmp_path):
    def mutate(doc):
        keep_maps({"DEA"})(doc)
        doc["countries"]["Alpha"]["maps"]["DEA"] = str(tmp_path / "missing.tif")
    path = variant(fixture_config, tmp_path, mutate)
    assert main(["assess", "--config", str(path), "--out", str(tmp_path / "o")]) == 3


def test_malformed_metrics_csv(tmp_path):
    bad = tmp_path / "m.csv"
    bad.write_text("country,map,value\nA,B,1\n")
    assert main(["correlate", "--metrics", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_unknown_region_lists_choices(fixture_config, tmp_path, capsys):
    rc = main(["timeseries", "--config", str(fixture_config), "--country", "Alpha",
               "--region", "North", "--out", str(tmp_path)])
    assert rc == 1
    err = capsys.readouterr().err
    assert "North" in err and "West" in err and "East" in err


# --- outputs -----------------------------------------------------------------


def test_assess_two_maps(fixture_config, tmp_path):
    path = variant(fixture_config, tmp_path, keep_maps({"DEA", "GLAD"}))
    out = tmp_path / "o"
    assert main(["assess", "--config", str(path), "--out", str(out)]) == 0
    table = rows(out / "metrics.csv")
    assert table[0] == METRICS_HEADER
    alpha = [r for r in table[1:] if r[0] == "Alpha"]
    assert sorted({r[1] for r in alpha}) == ["DEA", "GLAD", "Majority Vote", "Mean"]
    per_map = [r for r in alpha if r[1] != "Mean"]
    assert len(per_map) == 12
    assert {r[2] for r in per_map} == {"accuracy", "precision", "recall", "f1"}
    for r in per_map:
        assert 0 <= float(r[3]) <= 1 and float(r[4]) >= 0 and int(r[5]) + int(r[6]) == 80


def test_assess_exclude_flag(fixture_config, tmp_path):
    path = variant(fixture_config, tmp_path, keep_maps({"DEA", "GLAD", "ASAP"}))
    out = tmp_path / "o"
    assert main(["assess", "--config", str(path), "--out", str(out), "--exclude", "ASAP"]) == 0
    assert "ASAP" not in {r[1] for r in rows(out / "metrics.csv")[1:]}
    meta = json.loads((out / "metrics.csv.meta.json").read_text())
    assert meta["excluded"] == ["ASAP"]


def test_every_output_has_sidecar(fixture_config, tmp_path):
    out = tmp_path / "o"
    path = variant(fixture_config, tmp_path, keep_maps({"DEA", "GLAD", "ASAP", "Dynamic World"}))
    for cmd in (["assess"], ["consensus", "--with-ensemble"], ["ensemble"],
                ["timeseries", "--country", "Alpha"], ["correlate"],
                ["sample", "--country", "Alpha", "--design", "uniform", "--n", "5"]):
        assert main(cmd + ["--config", str(path), "--out", str(out)]) == 0, cmd
    files = [p for p in out.iterdir() if not p.name.endswith(".meta.json")]
    assert len(files) > 20
    for p in files:
        meta = json.loads(Path(str(p) + ".meta.json").read_text())
        assert meta["output"] == p.name and meta["version"] and "seed" in meta


def test_consensus_identical_maps(fixture_config, tmp_path):
    # one raster under three names whose rules agree on 0/1 codes
    def mutate(doc):
        keep_maps({"DEA", "Nabil", "GLAD"})(doc)
        maps = doc["countries"]["Alpha"]["maps"]
        for k in maps:
            maps[k] = maps["DEA"]
    path = variant(fixture_config, tmp_path, mutate)
    out = tmp_path / "o"
    assert main(["consensus", "--config", str(path), "--out", str(out)]) == 0
    summary = rows(out / "agreement_summary.csv")
    rec = dict(zip(summary[0], summary[1]))
    assert float(rec["pct_all_same"]) == 100.0 and float(rec["pct_split"]) == 0.0
    matrix = rows(out / "agreement_Alpha.csv")
    off_diag = [float(v) for i, r in enumerate(matrix[1:]) for j, v in enumerate(r[1:]) if i != j]
    assert off_diag and all(v == 1.0 for v in off_diag)
    votes = read_geotiff(out / "consensus_Alpha.tif")
    assert set(np.unique(votes.values[votes.valid])) <= {0, 3}


def test_ensemble_matches_consensus(fixture_config, tmp_path):
    path = variant(fixture_config, tmp_path, keep_maps({"DEA", "Esri", "GLAD"}))
    out = tmp_path / "o"
    assert main(["consensus", "--config", str(path), "--out", str(out)]) == 0
    assert main(["ensemble", "--config", str(path), "--out", str(out)]) == 0
    votes = read_geotiff(out / "consensus_Alpha.tif")
    mv = read_geotiff(out / "majority_vote_Alpha.tif")
    assert np.array_equal(mv.values[votes.valid] == 1, votes.values[votes.valid] >= 2)
    assert np.array_equal(mv.valid, votes.valid)


@pytest.mark.parametrize("command", [["assess"], ["consensus", "--with-ensemble"]])
def test_byte_determinism_across_threads(fixture_config, tmp_path, command):
    snaps = []
    for threads in (1, 4, 8):
        out = tmp_path / f"t{threads}"
        assert main(command + ["--config", str(fixture_config), "--out", str(out),
                               "--threads", str(threads)]) == 0
        snaps.append(snapshot(out))
    assert snaps[0] == snaps[1] == snaps[2]


def test_sample_determinism(fixture_config, tmp_path):
    cmd = ["sample", "--config", str(fixture_config), "--country", "Beta", "--design", "stratified",
           "--allocation", "1:4,2:4,3:4"]
    assert main(cmd + ["--out", str(tmp_path / "a"), "--seed", "5"]) == 0
    assert main(cmd + ["--out", str(tmp_path / "b"), "--seed", "5"]) == 0
    assert main(cmd + ["--out", str(tmp_path / "c"), "--seed", "6"]) == 0
    a, b, c = (rows(tmp_path / d / "sample_Beta_stratified.csv") for d in "abc")
    assert a == b and a != c and len(a) == 13


def test_timeseries_fixture(fixture_config, tmp_path):
    out = tmp_path / "o"
    path = variant(fixture_config, tmp_path, keep_maps({"DEA", "ASAP"}))
    assert main(["timeseries", "--config", str(path), "--country", "Alpha", "--region", "West",
                 "--out", str(out)]) == 0
    table = rows(out / "timeseries_Alpha_West.csv")
    assert table[0] == ["timestamp", "mask", "region", "mean", "count"]
    assert {r[1] for r in table[1:]} == {"DEA", "ASAP"}
    stamps = [r[0] for r in table[1:] if r[1] == "DEA"]
    assert stamps == sorted(stamps) and len(stamps) == 6
    for r in table[1:]:
        assert r[3] == "" or 0.1 < float(r[3]) < 0.8


def test_correlate_bundled_table(tmp_path):
    out = tmp_path / "o"
    assert main(["correlate", "--out", str(out), "--exclude", "ASAP,GlobCover"]) == 0
    res = {r[0]: r for r in rows(out / "correlation_resolution.csv")[1:]}
    assert res["accuracy"][2] == "9" and res["accuracy"][3] == "ASAP|GlobCover"
    full = tmp_path / "full"
    assert main(["correlate", "--out", str(full)]) == 0
    mism = {r[0]: float(r[1]) for r in rows(full / "correlation_mismatch.csv")[1:]}
    assert mism["accuracy"] == pytest.approx(-0.40, abs=0.02)


def test_read_metrics_csv_round_trip(fixture_config, tmp_path):
    out = tmp_path / "o"
    path = variant(fixture_config, tmp_path, keep_maps({"DEA", "GLAD"}))
    assert main(["assess", "--config", str(path), "--out", str(out)]) == 0
    table = read_metrics_csv(out / "metrics.csv")
    assert ("Alpha", "DEA") in table and set(table[("Alpha", "DEA")]) == {"accuracy", "precision", "recall", "f1"}
