import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import brute_force_metrics, literal_f1_transcription
from highdan.errors import DataError, UndefinedMetricError
from highdan.metrics import (ConfusionMatrix, accumulate, build_report, format_table, mean_f1,
                             mean_iou, overall_accuracy, write_report)

PRED = [1, 1, 2, 2]
GT = [1, 2, 2, 2]


@pytest.fixture
def example_cm():
    return accumulate(ConfusionMatrix.empty(2), PRED, GT)


def test_accumulate_example(example_cm):
    cm = example_cm
    assert cm.at(1, 1) == 1 and cm.at(2, 1) == 1 and cm.at(2, 2) == 2 and cm.at(1, 2) == 0
    assert cm.total == 4


def test_accumulate_diagonal_and_ignore():
    cm = accumulate(ConfusionMatrix.empty(3), [1, 2, 3, 3], [1, 2, 3, 3])
    assert np.count_nonzero(cm.counts - np.diag(np.diag(cm.counts))) == 0
    cm = accumulate(ConfusionMatrix.empty(3), [1, 2, 3], [0, 0, 0])
    assert cm.total == 0
    with pytest.raises(UndefinedMetricError):
        overall_accuracy(cm)
    with pytest.raises(UndefinedMetricError):
        mean_iou(cm)
    with pytest.raises(UndefinedMetricError):
        mean_f1(cm)


def test_accumulate_is_pure_and_rejects_bad_classes():
    empty = ConfusionMatrix.empty(2)
    accumulate(empty, PRED, GT)
    assert empty.total == 0
    with pytest.raises(DataError):
        accumulate(empty, [1], [3])
    with pytest.raises(DataError):
        accumulate(empty, [5], [1])


def test_overall_accuracy_examples(example_cm):
    assert overall_accuracy(example_cm) == 0.75
    assert overall_accuracy(ConfusionMatrix(np.diag([3, 4, 5]))) == 1.0
    assert overall_accuracy(ConfusionMatrix(np.ones((2, 2), dtype=np.int64))) == 0.5


def test_mean_iou_examples(example_cm):
    per, m = mean_iou(example_cm)
    assert per == pytest.approx([0.5, 2 / 3])
    assert m == pytest.approx(7 / 12)
    per, m = mean_iou(ConfusionMatrix(np.diag([2, 1])))
    assert per == [1.0, 1.0]
    counts = np.array([[3, 0, 1], [0, 0, 0], [1, 0, 2]])
    per, m = mean_iou(ConfusionMatrix(counts))
    assert per[1] is None
    assert m == pytest.approx((3 / 5 + 2 / 4) / 2)


def test_mean_f1_examples(example_cm):
    per, m = mean_f1(example_cm)
    assert per == pytest.approx([2 / 3, 4 / 5])
    assert m == pytest.approx(11 / 15)
    assert mean_f1(ConfusionMatrix(np.diag([5, 5, 1])))[1] == 1.0


def test_mean_f1_paper_literal_matches_transcription(example_cm):
    oracle = literal_f1_transcription(example_cm.counts.tolist())
    assert oracle == pytest.approx(45 / 104)
    _, m = mean_f1(example_cm, "paper_literal")
    assert m == pytest.approx(oracle, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 64), st.integers(0, 2**31 - 1))
def test_matrix_metrics_equal_brute_force(l, n, seed):
    r = np.random.default_rng(seed)
    gt = r.integers(0, l + 1, size=n)
    gt[0] = r.integers(1, l + 1)
    pred = r.integers(1, l + 1, size=n)
    cm = accumulate(ConfusionMatrix.empty(l), pred, gt)
    oa, ious, miou, f1s, mf1 = brute_force_metrics(gt, pred, range(1, l + 1))
    assert overall_accuracy(cm) == pytest.approx(oa, abs=1e-9)
    per_iou, m_iou = mean_iou(cm)
    per_f1, m_f1 = mean_f1(cm)
    assert m_iou == pytest.approx(miou, abs=1e-9)
    assert m_f1 == pytest.approx(mf1, abs=1e-9)
    for a, b in zip(per_iou + per_f1, ious + f1s):
        assert (a is None and b is None) or a == pytest.approx(b, abs=1e-9)
    for v in [overall_accuracy(cm)] + [v for v in per_iou + per_f1 if v is not None]:
        assert 0.0 <= v <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(2, 64), st.integers(0, 2**31 - 1))
def test_metrics_invariant_under_relabeling(l, n, seed):
    r = np.random.default_rng(seed)
    gt = r.integers(1, l + 1, size=n)
    pred = r.integers(1, l + 1, size=n)
    perm = np.concatenate([[0], 1 + r.permutation(l)])
    a = accumulate(ConfusionMatrix.empty(l), pred, gt)
    b = accumulate(ConfusionMatrix.empty(l), perm[pred], perm[gt])
    assert overall_accuracy(a) == pytest.approx(overall_accuracy(b))
    assert mean_iou(a)[1] == pytest.approx(mean_iou(b)[1])
    assert mean_f1(a)[1] == pytest.approx(mean_f1(b)[1])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 64), st.integers(0, 2**31 - 1))
def test_accumulate_associative(l, n, seed):
    r = np.random.default_rng(seed)
    gt = r.integers(0, l + 1, size=n)
    pred = r.integers(1, l + 1, size=n)
    k = int(r.integers(0, n + 1))
    whole = accumulate(ConfusionMatrix.empty(l), pred, gt)
    halves = (accumulate(ConfusionMatrix.empty(l), pred[:k], gt[:k])
              + accumulate(ConfusionMatrix.empty(l), pred[k:], gt[k:]))
    np.testing.assert_array_equal(whole.counts, halves.counts)


def test_report_schema(tmp_path, example_cm):
    rep = build_report(example_cm, ["a", "b"])
    assert set(rep) == {"oa", "miou", "mf1", "per_class", "confusion", "mode", "evaluated_pixels"}
    assert rep["per_class"][0] == {"class_id": 1, "name": "a", "iou": 0.5, "f1": pytest.approx(2 / 3)}
    assert rep["confusion"] == [[1, 0], [1, 2]]
    assert rep["evaluated_pixels"] == 4 and rep["mode"] == "standard"
    write_report(rep, tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["oa"] == 0.75
    sparse = ConfusionMatrix(np.array([[2, 0], [0, 0]]))
    rep = build_report(sparse)
    assert rep["per_class"][1]["iou"] is None and rep["per_class"][1]["f1"] is None
    assert "--" in format_table(rep)
