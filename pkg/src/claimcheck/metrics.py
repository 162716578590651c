"""Span and classification metrics: exact match, token IoU, accuracy,
weighted F1, confusion matrices, span-error buckets, length-stratified
coverage.

All text comparison is done on a normalized form: trimmed, internal
whitespace collapsed, casefolded. Tokens are whitespace tokens of the
normalized text and are compared as multisets (repeated words must not
inflate overlap).
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np


def normalize_text(text: str) -> str:
    return " ".join(text.split()).casefold()


def tokenize(text: str) -> list[str]:
    return normalize_text(text).split()


def exact_match(pred: str, gold: str) -> int:
    """1 iff the normalized strings are identical, else 0."""
    return int(normalize_text(pred) == normalize_text(gold))


def token_iou(pred: str, gold: str) -> float:
    """Multiset intersection over union of whitespace tokens.

    Both empty -> 1.0; exactly one empty -> 0.0.
    """
    p, g = Counter(tokenize(pred)), Counter(tokenize(gold))
    union = sum((p | g).values())
    if union == 0:
        return 1.0
    return sum((p & g).values()) / union


def token_coverage(pred: str, gold: str) -> float:
    """Fraction of gold tokens covered by prediction tokens (multiset)."""
    p, g = Counter(tokenize(pred)), Counter(tokenize(gold))
    if sum(g.values()) == 0:
        return 1.0 if sum(p.values()) == 0 else 0.0
    return sum((p & g).values()) / sum(g.values())


class SpanErrorCategory(str, Enum):
    CORRECT = "correct"
    ADDITIVE = "additive"
    REORDERED = "reordered"
    CHANGED = "changed"
    SUBTRACTIVE = "subtractive"


def categorize_span_error(pred: str, gold: str) -> SpanErrorCategory:
    """Bucket a prediction against its gold span.

    correct iff exact match; otherwise with P, G the normalized token
    multisets: reordered if P == G, additive if P is a proper superset,
    subtractive if a proper subset, changed otherwise. Evaluated in that
    order so the buckets are mutually exclusive and exhaustive.
    """
    if exact_match(pred, gold):
        return SpanErrorCategory.CORRECT
    p, g = Counter(tokenize(pred)), Counter(tokenize(gold))
    if p == g:
        return SpanErrorCategory.REORDERED
    if p > g:
        return SpanErrorCategory.ADDITIVE
    if p < g:
        return SpanErrorCategory.SUBTRACTIVE
    return SpanErrorCategory.CHANGED


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ClassificationReport:
    labels: tuple[Hashable, ...]
    accuracy: float
    per_class: dict[Hashable, ClassScores]
    weighted_f1: float
    confusion: np.ndarray  # [actual, predicted], label order = self.labels

    def to_json(self) -> dict:
        return {
            "labels": [str(getattr(l, "value", l)) for l in self.labels],
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "per_class": {
                str(getattr(l, "value", l)): {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for l, s in self.per_class.items()
            },
            "confusion": self.confusion.tolist(),
        }

    def confusion_csv(self) -> str:
        """Rows = actual, columns = predicted, in label order."""
        names = [str(getattr(l, "value", l)) for l in self.labels]
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["actual\\predicted"] + names)
        for name, row in zip(names, self.confusion):
            writer.writerow([name] + [int(v) for v in row])
        return buf.getvalue()


def classification_report(
    pred: Sequence[Hashable],
    gold: Sequence[Hashable],
    label_order: Optional[Sequence[Hashable]] = None,
) -> ClassificationReport:
    """Accuracy, per-class P/R/F1/support, weighted F1, confusion matrix.

    Classes with zero predicted positives get precision 0. Weighted F1 is
    the support-weighted mean of per-class F1.
    """
    if len(pred) != len(gold):
        raise ValueError(f"pred and gold lengths differ: {len(pred)} vs {len(gold)}")
    if not gold:
        raise ValueError("cannot score an empty label list")

    if label_order is None:
        labels = tuple(sorted({*gold, *pred}, key=lambda l: str(getattr(l, "value", l))))
    else:
        labels = tuple(label_order)
        extra = {*gold, *pred} - set(labels)
        if extra:
            raise ValueError(f"labels outside label_order: {sorted(map(str, extra))}")

    index = {l: i for i, l in enumerate(labels)}
    confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
    gi = np.fromiter((index[g] for g in gold), dtype=np.int64, count=len(gold))
    pi = np.fromiter((index[p] for p in pred), dtype=np.int64, count=len(pred))
    np.add.at(confusion, (gi, pi), 1)

    tp = np.diag(confusion).astype(float)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)

    total_support = support.sum()
    weighted_f1 = float((support * f1).sum() / total_support)
    per_class = {
        l: ClassScores(float(precision[i]), float(recall[i]), float(f1[i]), int(support[i]))
        for l, i in index.items()
    }
    return ClassificationReport(
        labels=labels,
        accuracy=float(tp.sum() / total_support),
        per_class=per_class,
        weighted_f1=weighted_f1,
        confusion=confusion,
    )


def labels_from_confusion(matrix: Sequence[Sequence[int]], labels: Sequence[Hashable]) -> tuple[list, list]:
    """Expand a confusion matrix back into (gold, pred) label sequences."""
    gold, pred = [], []
    for i, row in enumerate(matrix):
        for j, count in enumerate(row):
            gold.extend([labels[i]] * count)
            pred.extend([labels[j]] * count)
    return gold, pred


# ---------------------------------------------------------------------------
# span-error analysis


@dataclass
class SpanErrorAnalysis:
    counts: dict[SpanErrorCategory, int]
    error_percents: dict[SpanErrorCategory, float]  # share of *inaccurate* predictions
    mean_gold_len_correct: Optional[float]
    mean_gold_len_incorrect: Optional[float]

    def to_json(self) -> dict:
        return {
            "counts": {k.value: v for k, v in self.counts.items()},
            "error_percents": {k.value: v for k, v in self.error_percents.items()},
            "mean_gold_len_correct": self.mean_gold_len_correct,
            "mean_gold_len_incorrect": self.mean_gold_len_incorrect,
        }


def analyze_span_errors(preds: Sequence[str], golds: Sequence[str]) -> SpanErrorAnalysis:
    """Histogram of span-error buckets plus the correct-vs-incorrect mean
    gold length comparison. Percentages are reported alongside raw counts
    (over the inaccurate predictions only)."""
    if len(preds) != len(golds):
        raise ValueError("preds and golds lengths differ")
    counts = Counter(categorize_span_error(p, g) for p, g in zip(preds, golds))
    errors = sum(v for k, v in counts.items() if k is not SpanErrorCategory.CORRECT)
    percents = {
        k: (100.0 * counts.get(k, 0) / errors if errors else 0.0)
        for k in SpanErrorCategory
        if k is not SpanErrorCategory.CORRECT
    }
    correct_lens = [
        len(tokenize(g)) for p, g in zip(preds, golds) if exact_match(p, g)
    ]
    wrong_lens = [
        len(tokenize(g)) for p, g in zip(preds, golds) if not exact_match(p, g)
    ]
    return SpanErrorAnalysis(
        counts={k: counts.get(k, 0) for k in SpanErrorCategory},
        error_percents=percents,
        mean_gold_len_correct=sum(correct_lens) / len(correct_lens) if correct_lens else None,
        mean_gold_len_incorrect=sum(wrong_lens) / len(wrong_lens) if wrong_lens else None,
    )


def coverage_by_length(
    preds: Sequence[str],
    golds: Sequence[str],
    buckets: Sequence[tuple[int, Optional[int]]],
) -> dict[tuple[int, Optional[int]], float]:
    """Mean gold-token coverage per gold-length bucket.

    ``buckets`` are inclusive (lo, hi) ranges over the gold token count;
    ``hi=None`` means unbounded. Empty buckets are absent from the result,
    not reported as zero.
    """
    if len(preds) != len(golds):
        raise ValueError("preds and golds lengths differ")
    sums: dict[tuple[int, Optional[int]], list[float]] = {b: [] for b in buckets}
    for p, g in zip(preds, golds):
        n = len(tokenize(g))
        for lo, hi in buckets:
            if n >= lo and (hi is None or n <= hi):
                sums[(lo, hi)].append(token_coverage(p, g))
                break
    return {b: sum(v) / len(v) for b, v in sums.items() if v}
