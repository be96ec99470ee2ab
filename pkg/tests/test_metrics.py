import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from quickcpd.metrics import (
    ConfusionCounts,
    Outcome,
    Partition,
    classify_outcome,
    covering,
    curve_area,
    default_grid,
    delay_and_ttfa,
    detection_curve,
    evaluate_change_sets,
    evaluate_probabilities,
    f1,
)
from quickcpd.types import ChangeLabel, DetectionResult, MultiChangeLabel

C, N = ChangeLabel.change, ChangeLabel.no_change
R = lambda *a: DetectionResult(tuple(a))  # noqa: E731


@pytest.mark.parametrize("label,result,outcome", [
    (C(5), R(7), Outcome.TP),
    (C(5), R(5), Outcome.TP),
    (C(5), R(3), Outcome.FP),
    (C(5), R(), Outcome.FN),
    (N(), R(2), Outcome.FP),
    (N(), R(), Outcome.TN),
])
def test_classify_outcome(label, result, outcome):
    assert classify_outcome(label, result) is outcome


@pytest.mark.parametrize("counts,expected", [
    (ConfusionCounts(tp=1), 1.0),
    (ConfusionCounts(fp=1, fn=1), 0.0),
    (ConfusionCounts(tp=3, fp=1, fn=1), 0.75),
    (ConfusionCounts(tn=4), None),
])
def test_f1_examples(counts, expected):
    assert f1(counts) == expected


@given(tp=st.integers(0, 50), fp=st.integers(0, 50), fn=st.integers(0, 50), k=st.integers(1, 9))
def test_f1_bounded_and_scale_invariant(tp, fp, fn, k):
    a = f1(ConfusionCounts(tp, 0, fp, fn))
    b = f1(ConfusionCounts(k * tp, 0, k * fp, k * fn))
    if a is None:
        assert b is None
    else:
        assert 0.0 <= a <= 1.0 and b == pytest.approx(a)


@pytest.mark.parametrize("label,result,expected", [
    (C(5), R(7), (2, 20)),
    (N(), R(4), (None, 4)),
    (C(5), R(), (15, 20)),
    (C(5), R(2), (None, 2)),
    (N(), R(), (None, 20)),
])
def test_delay_and_ttfa(label, result, expected):
    assert delay_and_ttfa(label, result, 20) == expected


@given(theta=st.one_of(st.none(), st.integers(0, 19)), tau=st.one_of(st.none(), st.integers(0, 19)))
def test_outcome_and_delay_consistency(theta, tau):
    label = N() if theta is None else C(theta)
    res = R() if tau is None else R(tau)
    dd, ttfa = delay_and_ttfa(label, res, 20)
    outcome = classify_outcome(label, res)
    if dd is not None:
        assert outcome in (Outcome.TP, Outcome.FN)
    if ttfa < 20:
        assert outcome is Outcome.FP


def test_covering_examples():
    assert covering(Partition.from_change_points([5], 10), Partition.from_change_points([6], 10)) == pytest.approx(
        (5 * 5 / 6 + 5 * 4 / 5) / 10)
    assert covering(Partition.from_change_points([5], 10), Partition.from_change_points([], 10)) == 0.5
    p = Partition.from_change_points([2, 7], 10)
    assert covering(p, p) == 1.0


@settings(max_examples=200)
@given(a=st.sets(st.integers(1, 14), max_size=6), b=st.sets(st.integers(1, 14), max_size=6))
def test_covering_range_and_identity(a, b):
    pa, pb = Partition.from_change_points(a, 15), Partition.from_change_points(b, 15)
    cov = covering(pa, pb)
    assert 0.0 <= cov <= 1.0
    assert (cov == 1.0) == (a == b)


def test_curve_area_examples():
    assert curve_area([(0, 10), (5, 0)]) == pytest.approx(25.0)
    assert curve_area([(3, 7)]) == 0.0
    assert curve_area([(0, 20)] * 5) == 0.0
    # duplicate x values are averaged before integrating
    assert curve_area([(0, 10), (0, 20), (2, 0)]) == pytest.approx(15.0)


def test_single_threshold_curve_has_zero_area():
    curve = detection_curve(np.array([[0.1, 0.9]]), [C(1)], grid=[0.5])
    assert curve.area == 0.0


def test_perfect_detector_curve_on_open_grid():
    T = 10
    labels = [C(3), N(), C(7)]
    probs = np.array([[0, 0, 0, 1, 1, 1, 1, 1, 1, 1], [0] * T, [0] * 7 + [1] * 3], dtype=float)
    curve = detection_curve(probs, labels, grid=np.linspace(0, 1, 41)[:-1])
    assert all(pt.mean_dd == 0 and pt.mean_ttfa == T for pt in curve.points)
    assert curve.area == 0.0


def test_threshold_one_never_alarms():
    probs = np.array([[0.0, 1.0, 1.0]])
    curve = detection_curve(probs, [C(1)], grid=[0.0, 1.0])
    assert curve.points[-1].fn == 1 and curve.points[-1].mean_dd == 2.0


@settings(max_examples=60, deadline=None)
@given(probs=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 12)),
                    elements=st.floats(0, 1, allow_nan=False)),
       data=st.data())
def test_mean_ttfa_non_decreasing_in_threshold(probs, data):
    T = probs.shape[1]
    labels = [data.draw(st.one_of(st.just(N()), st.builds(C, st.integers(0, T - 1)))) for _ in probs]
    curve = detection_curve(probs, labels)
    ttfa = [pt.mean_ttfa for pt in curve.points]
    assert all(b >= a for a, b in zip(ttfa, ttfa[1:]))
    assert all(pt.mean_dd >= 0 for pt in curve.points)
    for pt in curve.points:
        assert pt.tp + pt.tn + pt.fp + pt.fn == len(labels)


def test_report_picks_best_f1_threshold_and_writes_csv(tmp_path):
    probs = np.array([[0.1, 0.3, 0.8, 0.9], [0.1, 0.6, 0.2, 0.1]])
    report, curve = evaluate_probabilities("m", probs, [C(2), N()], default_grid())
    assert report.f1 == 1.0
    assert 0.6 <= report.threshold < 0.8
    assert report.mean_dd == 0.0
    curve.write_csv(tmp_path / "curve.csv")
    rows = list(csv.reader(open(tmp_path / "curve.csv")))
    assert rows[0] == ["threshold", "mean_dd", "mean_ttfa"]
    assert len(rows) == 42


def test_multi_change_covering_uses_all_crossings():
    probs = np.array([[0, 0, 0.9, 0.9, 0.1, 0.1, 0.9, 0.9]])
    ml = [MultiChangeLabel((2, 4, 6))]
    _, curve = evaluate_probabilities("m", probs, [ml[0].first()], [0.5], ml)
    # up-crossings at 2 and 6 give segments [0,2) [2,6) [6,8)
    expected = covering(Partition.from_change_points([2, 4, 6], 8), Partition.from_change_points([2, 6], 8))
    assert curve.points[0].covering == pytest.approx(expected)


def test_change_set_scoring_uses_first_change():
    rep = evaluate_change_sets("pelt", [(3, 7), (), (1,)], [C(3), N(), C(4)], 10)
    assert (rep.counts["tp"], rep.counts["tn"], rep.counts["fp"]) == (1, 1, 1)
    assert rep.mean_dd == 0.0
    assert rep.mean_ttfa == pytest.approx((10 + 10 + 1) / 3)


def test_invalid_partition():
    with pytest.raises(ValueError):
        Partition(((0, 3), (4, 6)))
    with pytest.raises(ValueError):
        covering(Partition.from_change_points([], 5), Partition.from_change_points([], 6))
