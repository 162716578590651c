import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from claimcheck.metrics import (
    ClassificationReport,
    SpanErrorCategory,
    analyze_span_errors,
    categorize_span_error,
    classification_report,
    coverage_by_length,
    exact_match,
    labels_from_confusion,
    token_coverage,
    token_iou,
)

WORDS = ["the", "second", "book", "modi", "prime", "minister", "flag", "a", "b"]
texts = st.lists(st.sampled_from(WORDS), min_size=0, max_size=6).map(" ".join)


# ---------------------------------------------------------------------------
# exact match / IoU


def test_exact_match_identity():
    assert exact_match("Prime Minister", "Prime Minister") == 1


def test_exact_match_disjoint():
    assert exact_match("Narendra Modi", "Prime Minister") == 0


def test_exact_match_normalizes_whitespace_and_case():
    assert exact_match("  prime  minister", "Prime Minister") == 1


def test_token_iou_hand_value():
    assert token_iou("the second book", "second book") == pytest.approx(2 / 3)


def test_token_iou_identical():
    assert token_iou("a b a", "a b a") == 1.0


def test_token_iou_empty_rules():
    assert token_iou("", "x") == 0.0
    assert token_iou("x", "") == 0.0
    assert token_iou("", "") == 1.0


def test_token_iou_multiset_not_set():
    # repeated words must not inflate overlap
    assert token_iou("a a", "a") == pytest.approx(1 / 2)


# ---------------------------------------------------------------------------
# span error categories


@pytest.mark.parametrize(
    "pred,gold,category",
    [
        ("Narendra Modi", "Narendra Modi", SpanErrorCategory.CORRECT),
        ("Narendra Modi", "Prime Minister Narendra Modi", SpanErrorCategory.SUBTRACTIVE),
        ("Modi Narendra", "Narendra Modi", SpanErrorCategory.REORDERED),
        ("President Modi", "Narendra Modi", SpanErrorCategory.CHANGED),
        ("Prime Minister Narendra Modi", "Narendra Modi", SpanErrorCategory.ADDITIVE),
        ("", "x", SpanErrorCategory.SUBTRACTIVE),
        ("x", "", SpanErrorCategory.ADDITIVE),
    ],
)
def test_categorize_span_error(pred, gold, category):
    assert categorize_span_error(pred, gold) is category


def test_analyze_span_errors_reports_counts_and_percents():
    preds = ["a", "a b", "b a", "c"]
    golds = ["a", "a b c", "a b", "d"]
    analysis = analyze_span_errors(preds, golds)
    assert analysis.counts[SpanErrorCategory.CORRECT] == 1
    assert analysis.counts[SpanErrorCategory.SUBTRACTIVE] == 1
    assert analysis.counts[SpanErrorCategory.REORDERED] == 1
    assert analysis.counts[SpanErrorCategory.CHANGED] == 1
    assert analysis.error_percents[SpanErrorCategory.SUBTRACTIVE] == pytest.approx(100 / 3)
    assert analysis.mean_gold_len_correct == pytest.approx(1.0)
    assert analysis.mean_gold_len_incorrect == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# classification report


def test_report_perfect():
    r = classification_report(["a", "b", "a"], ["a", "b", "a"])
    assert r.accuracy == 1.0
    assert r.weighted_f1 == 1.0


def test_report_hand_value():
    r = classification_report(pred=["A", "B", "B"], gold=["A", "A", "B"])
    assert r.weighted_f1 == pytest.approx(2 / 3)
    assert r.per_class["A"].f1 == pytest.approx(2 / 3)
    assert r.per_class["B"].f1 == pytest.approx(2 / 3)


def test_report_zero_predicted_class_gets_precision_zero():
    r = classification_report(pred=["a", "a"], gold=["a", "b"], label_order=["a", "b"])
    assert r.per_class["b"].precision == 0.0
    assert r.per_class["b"].f1 == 0.0


def test_report_length_mismatch():
    with pytest.raises(ValueError):
        classification_report(["a"], ["a", "b"])
    with pytest.raises(ValueError):
        classification_report([], [])


def test_confusion_csv_layout():
    r = classification_report(["x", "y"], ["x", "x"], label_order=["x", "y"])
    lines = r.confusion_csv().strip().splitlines()
    assert lines[0].split(",") == ["actual\\predicted", "x", "y"]
    assert lines[1].split(",") == ["x", "1", "1"]
    assert lines[2].split(",") == ["y", "0", "0"]


def brute_force_report(pred, gold, labels):
    """Independent oracle: naive per-class TP/FP/FN counting loops."""
    n = len(gold)
    accuracy = sum(p == g for p, g in zip(pred, gold)) / n
    per_class, weighted = {}, 0.0
    confusion = [[0] * len(labels) for _ in labels]
    index = {l: i for i, l in enumerate(labels)}
    for p, g in zip(pred, gold):
        confusion[index[g]][index[p]] += 1
    for lab in labels:
        tp = sum(1 for p, g in zip(pred, gold) if p == lab and g == lab)
        fp = sum(1 for p, g in zip(pred, gold) if p == lab and g != lab)
        fn = sum(1 for p, g in zip(pred, gold) if p != lab and g == lab)
        support = sum(1 for g in gold if g == lab)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[lab] = (precision, recall, f1, support)
        weighted += f1 * support
    return accuracy, per_class, weighted / n, confusion


def test_report_matches_brute_force_oracle():
    rng = np.random.default_rng(42)
    for _ in range(50):
        k = int(rng.integers(1, 7))
        labels = [f"c{i}" for i in range(k)]
        n = int(rng.integers(1, 51))
        gold = [labels[i] for i in rng.integers(0, k, n)]
        pred = [labels[i] for i in rng.integers(0, k, n)]
        report = classification_report(pred, gold, labels)
        acc, per, wf1, conf = brute_force_report(pred, gold, labels)
        assert abs(report.accuracy - acc) < 1e-12
        assert abs(report.weighted_f1 - wf1) < 1e-12
        assert report.confusion.tolist() == conf
        for lab in labels:
            p, r, f, s = per[lab]
            got = report.per_class[lab]
            assert abs(got.precision - p) < 1e-12
            assert abs(got.recall - r) < 1e-12
            assert abs(got.f1 - f) < 1e-12
            assert got.support == s


def test_report_matches_sklearn():
    sklearn_metrics = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(7)
    for _ in range(20):
        k = int(rng.integers(2, 6))
        labels = [f"c{i}" for i in range(k)]
        n = int(rng.integers(5, 60))
        gold = [labels[i] for i in rng.integers(0, k, n)]
        pred = [labels[i] for i in rng.integers(0, k, n)]
        report = classification_report(pred, gold, labels)
        expected = sklearn_metrics.f1_score(gold, pred, labels=labels, average="weighted", zero_division=0)
        assert report.weighted_f1 == pytest.approx(expected, abs=1e-12)


def test_labels_from_confusion_round_trip():
    matrix = [[3, 1], [2, 4]]
    gold, pred = labels_from_confusion(matrix, ["a", "b"])
    report = classification_report(pred, gold, ["a", "b"])
    assert report.confusion.tolist() == matrix


# ---------------------------------------------------------------------------
# coverage


def test_coverage_exact_matches_are_one():
    buckets = [(1, 2), (3, None)]
    out = coverage_by_length(["a b", "a b c d"], ["a b", "a b c d"], buckets)
    assert out == {(1, 2): 1.0, (3, None): 1.0}


def test_coverage_half():
    out = coverage_by_length(["a"], ["a b"], [(2, 2)])
    assert out[(2, 2)] == pytest.approx(0.5)


def test_coverage_empty_bucket_absent():
    out = coverage_by_length(["a"], ["a"], [(1, 1), (5, None)])
    assert (5, None) not in out


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=200, deadline=None)
@given(texts, texts)
def test_em_implies_iou_one_and_correct(pred, gold):
    if exact_match(pred, gold) == 1:
        assert token_iou(pred, gold) == 1.0
        assert categorize_span_error(pred, gold) is SpanErrorCategory.CORRECT


@settings(max_examples=200, deadline=None)
@given(texts, texts)
def test_iou_symmetric_and_bounded(a, b):
    iou = token_iou(a, b)
    assert 0.0 <= iou <= 1.0
    assert iou == token_iou(b, a)
    assert token_iou(a, a) == 1.0


@settings(max_examples=200, deadline=None)
@given(texts, texts)
def test_categories_total_and_exclusive(pred, gold):
    got = categorize_span_error(pred, gold)
    assert got in SpanErrorCategory
    # re-deriving by definition gives the same unique bucket
    from collections import Counter

    p, g = Counter(pred.split()), Counter(gold.split())
    if exact_match(pred, gold):
        assert got is SpanErrorCategory.CORRECT
    elif p == g:
        assert got is SpanErrorCategory.REORDERED
    elif p > g:
        assert got is SpanErrorCategory.ADDITIVE
    elif p < g:
        assert got is SpanErrorCategory.SUBTRACTIVE
    else:
        assert got is SpanErrorCategory.CHANGED


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=40))
def test_confusion_trace_is_accuracy(gold):
    rng = np.random.default_rng(len(gold))
    pred = [["a", "b", "c"][i] for i in rng.integers(0, 3, len(gold))]
    report = classification_report(pred, gold, ["a", "b", "c"])
    assert np.trace(report.confusion) / report.confusion.sum() == pytest.approx(report.accuracy)
    assert report.confusion.sum(axis=1).tolist() == [report.per_class[l].support for l in ["a", "b", "c"]]


@settings(max_examples=100, deadline=None)
@given(texts, texts)
def test_coverage_between_zero_and_one(pred, gold):
    assert 0.0 <= token_coverage(pred, gold) <= 1.0
