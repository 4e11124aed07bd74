"""Evaluation metrics: confusion counts, precision/recall/F1, one-vs-rest AUC.

Conventions the numbers depend on:

* Confusion matrices are (C, C) integer arrays, rows indexed by true class
  and columns by predicted class.
* Any 0/0 quotient in precision, recall, or F1 is defined as 0, and classes
  with zero support (no true members) are excluded from macro averages and
  carry zero weight in the weighted mean.
* AUC is the exact rank statistic P(score_pos > score_neg) + 0.5 P(tie),
  which equals trapezoidal ROC integration.  A class without both a positive
  and a negative example has no defined AUC; it is reported as NaN and
  excluded from the macro mean.
* Argmax ties break toward the lowest class index.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np


class LengthMismatch(Exception):
    """Prediction, label, or score arrays disagree in length."""


class IndexOutOfRange(Exception):
    """A class index falls outside [0, class_count)."""


class EmptyMatrix(Exception):
    """No samples to evaluate."""


class DegenerateLabels(Exception):
    """No class has both a positive and a negative example."""


@dataclass(frozen=True)
class MetricsReport:
    """All evaluation numbers for one scored set.

    Per-class entries are ordered by class index.  AUC entries are NaN for
    classes without both positives and negatives; ``macro_auc`` is NaN only
    when every class is degenerate.
    """

    accuracy: float
    precision_per_class: tuple
    recall_per_class: tuple
    f1_per_class: tuple
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_f1: float
    auc_per_class: tuple
    macro_auc: float


def confusion_matrix(predictions, labels, class_count: int) -> np.ndarray:
    """Count matrix with counts[t][p] = |{i : label i = t and prediction i = p}|."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if class_count < 2:
        raise ValueError(f"class_count must be >= 2, got {class_count}")
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise LengthMismatch(
            f"predictions {predictions.shape} vs labels {labels.shape}")
    if predictions.size:
        lo = min(predictions.min(), labels.min())
        hi = max(predictions.max(), labels.max())
        if lo < 0 or hi >= class_count:
            raise IndexOutOfRange(f"class index outside [0, {class_count})")
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def _check_cm(cm) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] < 2:
        raise ValueError(f"confusion matrix must be square with C >= 2, got {cm.shape}")
    if (cm < 0).any():
        raise ValueError("confusion matrix entries must be >= 0")
    return cm


def accuracy(cm) -> float:
    """Trace over total: the fraction of samples predicted correctly."""
    cm = _check_cm(cm)
    total = int(cm.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    return float(np.trace(cm)) / total


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def precision_recall(cm) -> tuple:
    """Per-class precision TP/(TP+FP) and recall TP/(TP+FN), 0/0 as 0."""
    cm = _check_cm(cm)
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_div(tp, cm.sum(axis=0).astype(np.float64))
    recall = _safe_div(tp, cm.sum(axis=1).astype(np.float64))
    return precision, recall


def f1_scores(cm) -> tuple:
    """Per-class F1 plus macro (zero-support classes excluded) and weighted means."""
    cm = _check_cm(cm)
    precision, recall = precision_recall(cm)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    support = cm.sum(axis=1).astype(np.float64)
    supported = support > 0
    macro = float(f1[supported].mean()) if supported.any() else 0.0
    total = support.sum()
    weighted = float((f1 * support).sum() / total) if total > 0 else 0.0
    return f1, macro, weighted


def _check_scores(probs, labels, probabilistic: bool) -> tuple:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ValueError(f"scores must be (n, c) with c >= 2, got {probs.shape}")
    if labels.ndim != 1 or labels.shape[0] != probs.shape[0]:
        raise LengthMismatch(f"scores {probs.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise IndexOutOfRange(f"label outside [0, {probs.shape[1]})")
    if probabilistic:
        if (probs < 0).any() or (probs > 1).any():
            raise ValueError("probabilities must lie in [0, 1]")
        if probs.shape[0] and np.abs(probs.sum(axis=1) - 1.0).max() > 1e-6:
            raise ValueError("probability rows must sum to 1 within 1e-6")
    return probs, labels


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    new_group = np.r_[True, sx[1:] != sx[:-1]]
    group = np.cumsum(new_group) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts).astype(np.float64)
    starts = ends - counts + 1
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = ((starts + ends) / 2.0)[group]
    return ranks


def ovr_auc(probs, labels) -> tuple:
    """One-vs-rest AUC per class and its macro mean.

    AUC_c is computed from the rank sum of the positives (Mann-Whitney
    form), giving ties half credit.  Columns are compared only by rank, so
    any real-valued scores work, not just calibrated probabilities.
    Degenerate classes come back as NaN; if every class is degenerate there
    is nothing to average and DegenerateLabels is raised.
    """
    probs, labels = _check_scores(probs, labels, probabilistic=False)
    n, c = probs.shape
    per_class = np.full(c, math.nan)
    for cls in range(c):
        pos = labels == cls
        n_pos = int(pos.sum())
        n_neg = n - n_pos
        if n_pos == 0 or n_neg == 0:
            continue
        ranks = _midranks(probs[:, cls])
        rank_sum = float(ranks[pos].sum())
        per_class[cls] = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    defined = ~np.isnan(per_class)
    if not defined.any():
        raise DegenerateLabels("no class has both positive and negative examples")
    return per_class, float(per_class[defined].mean())


def evaluate(probs, labels) -> MetricsReport:
    """Score a probability matrix against true labels.

    Predictions are row argmaxes (ties to the lowest index).  When no class
    has both positives and negatives the AUC fields are NaN instead of an
    error, so single-class test sets still produce a report.
    """
    probs, labels = _check_scores(probs, labels, probabilistic=True)
    if probs.shape[0] == 0:
        raise EmptyMatrix("no samples to evaluate")
    predictions = np.argmax(probs, axis=1)
    cm = confusion_matrix(predictions, labels, probs.shape[1])

    precision, recall = precision_recall(cm)
    f1, macro_f1, weighted_f1 = f1_scores(cm)
    support = cm.sum(axis=1)
    supported = support > 0
    macro_precision = float(precision[supported].mean())
    macro_recall = float(recall[supported].mean())
    try:
        auc, macro_auc = ovr_auc(probs, labels)
    except DegenerateLabels:
        auc, macro_auc = np.full(probs.shape[1], math.nan), math.nan

    return MetricsReport(
        accuracy=accuracy(cm),
        precision_per_class=tuple(precision),
        recall_per_class=tuple(recall),
        f1_per_class=tuple(f1),
        macro_precision=macro_precision,
        macro_recall=macro_recall,
        macro_f1=macro_f1,
        weighted_f1=weighted_f1,
        auc_per_class=tuple(auc),
        macro_auc=macro_auc,
    )


def _round6(value):
    if isinstance(value, tuple):
        return [_round6(v) for v in value]
    if isinstance(value, float) and math.isnan(value):
        return None
    return round(value, 6)


def report_to_dict(report: MetricsReport) -> dict:
    """JSON form: floats at 6 decimals, undefined AUC values as null."""
    return {k: _round6(v) for k, v in asdict(report).items()}


def write_report_json(path, report: MetricsReport, config_hash: str | None = None) -> None:
    d = report_to_dict(report)
    if config_hash is not None:
        d["config_hash"] = config_hash
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_scores_csv(path, ids, labels, probs, config_hash: str | None = None) -> None:
    """Write per-sample scores: header ``id,label,p0,...,p{C-1}``."""
    probs = np.asarray(probs, dtype=np.float64)
    if not (len(ids) == len(labels) == probs.shape[0]):
        raise LengthMismatch("ids, labels, and score rows must align")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"p{i}" for i in range(probs.shape[1])])
        for sid, label, row in zip(ids, labels, probs):
            writer.writerow([sid, int(label)] + [repr(float(p)) for p in row])


def read_scores_csv(path) -> tuple:
    """Read a scores CSV back as (ids, labels, probs, config_hash)."""
    ids, labels, rows = [], [], []
    config_hash = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if first.startswith("# config_hash="):
            config_hash = first.strip().split("=", 1)[1]
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["id", "label"]:
            raise ValueError(f"{path}: expected header 'id,label,p0,...', got {header!r}")
        width = len(header) - 2
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise LengthMismatch(f"{path}: row width {len(row)} != header {len(header)}")
            ids.append(row[0])
            labels.append(int(row[1]))
            rows.append([float(v) for v in row[2:]])
    probs = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    return ids, np.array(labels, dtype=np.int64), probs, config_hash
