import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import unit_grid
from cropcompare.assess import (
    METRICS,
    ErrorMatrix,
    aggregate_mean,
    compute_metrics,
    display,
    error_matrix,
    evaluate_map,
    f1_stderr,
    round_half_up,
    standard_errors,
)
from cropcompare.errors import EmptyInputError
from cropcompare.grid import MASK_NODATA, BinaryMask
from cropcompare.reference import ReferenceDataset

probs = st.floats(0.01, 1.0)
errs = st.floats(0.0, 0.5)


def test_error_matrix_examples():
    assert error_matrix([1, 0, 1], [1, 0, 1]) == ErrorMatrix(2, 0, 0, 1)
    m = error_matrix([0, 1, 0, 1], [1, 0, 1, 0])
    assert m.tp == m.tn == 0 and m.fp == m.fn == 2


def test_error_matrix_matches_tally(rng):
    pred = rng.integers(0, 2, 200)
    ref = rng.integers(0, 2, 200)
    assert error_matrix(pred, ref).__dict__ == oracles.tally(pred.tolist(), ref.tolist())


@pytest.mark.parametrize("pred,ref,exc", [([1], [1, 0], ValueError), ([], [], EmptyInputError),
                                          ([2], [1], ValueError)])
def test_error_matrix_errors(pred, ref, exc):
    with pytest.raises(exc):
        error_matrix(pred, ref)


def test_compute_metrics_worked_example():
    m = compute_metrics(ErrorMatrix(tp=3, fp=1, fn=2, tn=4))
    assert (m.precision, m.recall, m.accuracy) == (0.75, 0.6, 0.7)
    assert m.f1 == pytest.approx(2 * 0.45 / 1.35, abs=1e-15)


def test_compute_metrics_perfect():
    m = compute_metrics(ErrorMatrix(10, 0, 0, 0))
    assert all(m.value(k) == 1 for k in METRICS)


def test_compute_metrics_all_predicted_noncrop():
    # every point called non-crop and none is crop: accuracy 1, the rest 0 and flagged
    m = compute_metrics(ErrorMatrix(0, 0, 0, 50))
    assert m.accuracy == 1 and m.precision == m.recall == m.f1 == 0
    assert m.degenerate == {"precision", "recall", "f1"}
    assert m.se_precision == m.se_recall == m.se_f1 == 0


def test_accuracy_se_binomial():
    tn = round(0.96 * 573)
    m = ErrorMatrix(0, 0, 573 - tn, tn)
    se = standard_errors(m)[0]
    acc = tn / 573
    assert se == pytest.approx(math.sqrt(acc * (1 - acc) / 573))
    assert math.sqrt(0.96 * 0.04 / 573) == pytest.approx(0.0082, abs=1e-4)
    assert round_half_up(se) == 0.01


def test_accuracy_se_boundary():
    assert standard_errors(ErrorMatrix(5, 0, 0, 5))[0] == 0
    assert standard_errors(ErrorMatrix(0, 5, 5, 0))[0] == 0


def test_f1_stderr_worked_example():
    assert f1_stderr(0.68, 0.07, 0.78, 0.06) == pytest.approx(0.1908 / 1.46 + 1.0608 * 0.13 / 2.1316, abs=1e-12)
    assert f1_stderr(0.68, 0.07, 0.78, 0.06) == pytest.approx(0.1954, abs=1e-4)


def test_f1_stderr_zero_errors_and_degenerate():
    assert f1_stderr(0.5, 0, 0.7, 0) == 0
    assert f1_stderr(0, 0.1, 0, 0.1) == 0


@given(p=probs, dp=errs)
def test_f1_stderr_equal_inputs(p, dp):
    # at p = r the first term reduces to 2*dp and the second to dp
    assert f1_stderr(p, dp, p, dp) == pytest.approx(3 * dp, rel=1e-12, abs=1e-15)


@given(p=probs, dp=errs, r=probs, dr=errs)
def test_f1_stderr_symmetric(p, dp, r, dr):
    assert f1_stderr(p, dp, r, dr) == pytest.approx(f1_stderr(r, dr, p, dp), rel=1e-12, abs=1e-15)


@given(p=probs, dp=errs, r=probs, dr=errs, bump=st.floats(0, 0.2))
def test_f1_stderr_monotone(p, dp, r, dr, bump):
    base = f1_stderr(p, dp, r, dr)
    assert f1_stderr(p, dp + bump, r, dr) >= base - 1e-15
    assert f1_stderr(p, dp, r, dr + bump) >= base - 1e-15


@settings(max_examples=200)
@given(st.tuples(*[st.integers(0, 300)] * 4).filter(lambda t: sum(t) > 0))
def test_metric_invariants(counts):
    m = compute_metrics(ErrorMatrix(*counts))
    for k in METRICS:
        assert 0 <= m.value(k) <= 1 and m.stderr(k) >= 0
    if m.precision > 0 and m.recall > 0:
        assert min(m.precision, m.recall) - 1e-12 <= m.f1 <= max(m.precision, m.recall) + 1e-12


def test_aggregate_mean_examples():
    a = compute_metrics(ErrorMatrix(3, 1, 2, 4))
    assert aggregate_mean([a]) == a
    one = a.__class__(**{**a.__dict__, "accuracy": 0.8, "se_accuracy": 0.03})
    two = a.__class__(**{**a.__dict__, "accuracy": 0.9, "se_accuracy": 0.04})
    mean = aggregate_mean([one, two])
    assert mean.accuracy == pytest.approx(0.85) and mean.se_accuracy == pytest.approx(0.025)
    with pytest.raises(EmptyInputError):
        aggregate_mean([])


@given(k=st.integers(1, 12))
def test_aggregate_mean_of_copies(k):
    a = compute_metrics(ErrorMatrix(7, 2, 3, 11))
    mean = aggregate_mean([a] * k)
    for metric in METRICS:
        assert mean.value(metric) == pytest.approx(a.value(metric), rel=1e-15)
        assert mean.stderr(metric) == pytest.approx(a.stderr(metric) / math.sqrt(k), rel=1e-12)


def test_display_rounds_half_up():
    m = compute_metrics(ErrorMatrix(3, 1, 2, 4))
    assert display(m, "precision") == "0.75±" + f"{round_half_up(m.se_precision):.2f}"
    assert round_half_up(0.125) == 0.13 and round_half_up(0.8975) == 0.9


def dataset(xs, ys, labels):
    return ReferenceDataset(xs, ys, labels, "X", date(2019, 1, 1), date(2019, 12, 31))


def test_evaluate_map_truth_mask(rng):
    g = unit_grid(10, 10)
    truth = (rng.random((10, 10)) < 0.4).astype(np.uint8)
    rows, cols = rng.integers(0, 10, 30), rng.integers(0, 10, 30)
    ds = dataset(cols + 0.5, 10 - rows - 0.5, truth[rows, cols])
    ev = evaluate_map(BinaryMask(g, truth, MASK_NODATA), ds)
    assert all(ev.metrics.value(k) == 1 for k in METRICS) and ev.excluded == 0


def test_evaluate_map_all_nodata():
    g = unit_grid(2, 2)
    mask = BinaryMask(g, np.full((2, 2), MASK_NODATA, np.uint8), MASK_NODATA)
    with pytest.raises(EmptyInputError, match="all points excluded"):
        evaluate_map(mask, dataset([0.5], [0.5], [1]))


def test_evaluate_map_hand_tally():
    # 4x5 mask, 20 points: one per pixel centre, two on nodata pixels
    vals = np.array([[1, 1, 0, 0, 255],
                     [1, 0, 0, 0, 0],
                     [0, 0, 1, 1, 1],
                     [0, 255, 0, 0, 1]], np.uint8)
    labels = np.array([[1, 0, 0, 1, 1],
                       [1, 0, 0, 0, 0],
                       [0, 1, 1, 0, 1],
                       [0, 1, 0, 0, 0]])
    r, c = np.indices((4, 5))
    ds = dataset(c.ravel() + 0.5, 4 - r.ravel() - 0.5, labels.ravel())
    ev = evaluate_map(BinaryMask(unit_grid(4, 5), vals, MASK_NODATA), ds)
    assert ev.excluded == 2
    assert ev.matrix == ErrorMatrix(tp=4, fp=3, fn=2, tn=9)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=1000))
def test_compute_metrics_matches_recount(pairs):
    pred, ref = zip(*pairs)
    m = compute_metrics(error_matrix(pred, ref))
    expected = oracles.metrics_from_tally(oracles.tally(pred, ref))
    for k in METRICS:
        assert abs(m.value(k) - expected[k]) <= 1e-12
