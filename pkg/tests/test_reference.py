from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import DATA, unit_grid
from cropcompare.errors import EmptyInputError, SchemaError
from cropcompare.grid import CategoricalRaster, RegionPolygon
from cropcompare.productmap import extract_values
from cropcompare.reference import (
    RawLabeledPoint,
    ReferenceDataset,
    consolidate,
    read_raw_reference_csv,
    read_reference_csv,
    reference_year,
    stratified_sample,
    uniform_sample,
    write_raw_reference_csv,
    write_reference_csv,
)

START, END = date(2019, 1, 1), date(2019, 12, 31)
UNIT = RegionPolygon((((0, 0), (1, 0), (1, 1), (0, 1)),))


def raw(x, labels):
    return RawLabeledPoint(float(x), 0.0, tuple(labels), "Togo", START, END)


def test_consolidate_unanimity_examples():
    ds = consolidate([raw(0, [1, 1]), raw(1, [1, 0])])
    assert ds.x.tolist() == [0.0] and ds.label.tolist() == [1]


def test_consolidate_ten_points_three_discordant():
    labels = [[1, 1], [0, 0], [1, 0], [0, 0, 0], [1, 1, 1], [0, 1], [1, 1], [0, 0], [1, 1, 0], [0, 0]]
    ds = consolidate([raw(i, lab) for i, lab in enumerate(labels)])
    assert len(ds) == 7
    assert ds.counts == (7, 3, 4)
    assert ds.x.tolist() == [0, 1, 3, 4, 6, 7, 9]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 1), min_size=1, max_size=4), min_size=1, max_size=40))
def test_consolidate_property(label_lists):
    points = [raw(i, lab) for i, lab in enumerate(label_lists)]
    ds = consolidate(points)
    kept = [p for p in points if len(set(p.labels)) == 1]
    assert ds.x.tolist() == [p.x for p in kept]
    assert ds.label.tolist() == [p.labels[0] for p in kept]
    assert (len(ds) == len(points)) == all(len(set(p.labels)) == 1 for p in points)


def test_consolidate_errors():
    with pytest.raises(EmptyInputError):
        consolidate([])
    other = RawLabeledPoint(0.0, 0.0, (1,), "Kenya", START, END)
    with pytest.raises(ValueError):
        consolidate([raw(0, [1]), other])
    with pytest.raises(ValueError):
        raw(0, [])
    with pytest.raises(ValueError):
        raw(0, [2])


def test_uniform_sample_feasible_and_deterministic():
    poly = RegionPolygon((((0, 0), (10, 0), (10, 10), (5, 3), (0, 10)),))
    a = uniform_sample(poly, 500, seed=3)
    b = uniform_sample(poly, 500, seed=3)
    assert a.shape == (500, 2) and np.array_equal(a, b)
    assert all(oracles.point_in_polygon(x, y, poly.rings) for x, y in a)
    assert not np.array_equal(a, uniform_sample(poly, 500, seed=4))


def test_uniform_sample_quadrants():
    pts = uniform_sample(UNIT, 10_000, seed=11)
    quad = (pts[:, 0] >= 0.5).astype(int) * 2 + (pts[:, 1] >= 0.5)
    counts = np.bincount(quad, minlength=4)
    assert np.all(np.abs(counts - 2500) <= 150), counts


def test_uniform_sample_chi_square():
    stats = pytest.importorskip("scipy.stats")
    # L-shaped region cut into 12 equal-area unit cells
    poly = RegionPolygon((((0, 0), (4, 0), (4, 2), (2, 2), (2, 4), (0, 4)),))
    pts = uniform_sample(poly, 100_000, seed=5)
    cells = np.floor(pts[:, 0]).astype(int) * 4 + np.floor(pts[:, 1]).astype(int)
    counts = np.bincount(cells, minlength=16)
    occupied = counts[counts > 0]
    assert occupied.size == 12
    assert stats.chisquare(occupied).pvalue > 0.001


def test_uniform_sample_zero_area():
    flat = RegionPolygon((((0, 0), (1, 0), (2, 0)),))
    with pytest.raises(ValueError):
        uniform_sample(flat, 5, seed=0)


def strata_raster():
    vals = np.array([[1, 1, 2, 2], [1, 3, 2, 2], [3, 3, 1, 0]], dtype=np.uint8)
    return CategoricalRaster(unit_grid(3, 4), vals, 0)


def test_stratified_allocation_and_extract():
    s = strata_raster()
    pts = stratified_sample(s, {1: 2, 2: 3}, seed=1)
    xy = np.array([(x, y) for x, y, _ in pts])
    assert [k for _, _, k in pts] == [1, 1, 2, 2, 2]
    assert extract_values(s, xy).tolist() == [1, 1, 2, 2, 2]
    assert len(set(map(tuple, xy))) == 5
    assert pts == stratified_sample(s, {1: 2, 2: 3}, seed=1)


def test_stratified_exhaustive_draw():
    s = strata_raster()
    pts = stratified_sample(s, {3: 3}, seed=9)
    assert sorted((x, y) for x, y, _ in pts) == sorted([(1.5, 1.5), (0.5, 0.5), (1.5, 0.5)])


def test_stratified_errors():
    s = strata_raster()
    with pytest.raises(ValueError):
        stratified_sample(s, {3: 4}, seed=0)
    with pytest.raises(ValueError):
        stratified_sample(s, {7: 1}, seed=0)


def test_reference_csv_round_trip(tmp_path):
    ds = ReferenceDataset([0.1, 1 / 3], [2.0, -5e-7], [1, 0], "Kenya", date(2019, 2, 1), date(2020, 1, 31))
    write_reference_csv(ds, tmp_path / "r.csv")
    assert read_reference_csv(tmp_path / "r.csv") == ds
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "x,y,label,country,validity_start,validity_end"


def test_reference_csv_bad_label(tmp_path):
    (tmp_path / "r.csv").write_text(
        "x,y,label,country,validity_start,validity_end\n0,0,2,Togo,2019-01-01,2019-12-31\n")
    with pytest.raises(SchemaError):
        read_reference_csv(tmp_path / "r.csv")


def test_reference_csv_bad_header(tmp_path):
    (tmp_path / "r.csv").write_text("lon,lat,label\n0,0,1\n")
    with pytest.raises(SchemaError):
        read_reference_csv(tmp_path / "r.csv")


def test_raw_csv_round_trip(tmp_path):
    points = [raw(0, [1, 1]), raw(1, [0, 1, 1])]
    write_raw_reference_csv(points, tmp_path / "raw.csv")
    assert read_raw_reference_csv(tmp_path / "raw.csv") == points


def test_togo_fixture_counts():
    ds = read_reference_csv(DATA / "togo_reference.csv")
    assert ds.counts == (182, 51, 131)
    assert ds.reference_year == 2019


def test_reference_year_majority_rule():
    assert reference_year(date(2019, 2, 1), date(2020, 1, 31)) == 2019
    assert reference_year(date(2020, 9, 1), date(2021, 8, 31)) == 2021
    assert reference_year(date(2019, 7, 2), date(2020, 7, 1)) == 2019  # 183 vs 183 days: earlier year
    with pytest.raises(ValueError):
        reference_year(date(2020, 1, 1), date(2019, 1, 1))
