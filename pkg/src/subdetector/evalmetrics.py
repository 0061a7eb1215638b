"""Per-point score aggregation and ranking metrics (AUC, Recall@k, best F1)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import SubsequenceSet

__all__ = [
    "MetricError",
    "MetricReport",
    "aggregate_points",
    "auc",
    "recall_at_k",
    "best_f1",
    "label_segments",
    "evaluate",
    "format_report",
]


class MetricError(ValueError):
    """Metric undefined for the given inputs (e.g. single-class labels)."""


@dataclass(frozen=True)
class MetricReport:
    auc: float
    recall_at_k: dict
    best_f1: float
    threshold_at_best_f1: float


def aggregate_points(window_scores: np.ndarray, subseq: SubsequenceSet,
                     total_length: int | None = None) -> np.ndarray:
    """Per-point scores: max over covering windows.

    Trailing points not covered by any window inherit the last window's
    score, so the output always spans the full series.
    """
    scores = np.asarray(window_scores, dtype=np.float64)
    if scores.shape[0] != subseq.count:
        raise MetricError(
            f"{scores.shape[0]} window scores for {subseq.count} windows")
    if not np.all(np.isfinite(scores)):
        raise MetricError("window scores must be finite")
    length = subseq.length
    covered_end = int(subseq.starts[-1]) + length
    t = total_length if total_length is not None else covered_end
    out = np.full(t, -np.inf)
    for i in range(subseq.count):
        lo = int(subseq.starts[i])
        seg = out[lo:lo + length]
        np.maximum(seg, scores[i], out=seg)
    if t > covered_end:
        out[covered_end:] = scores[-1]
    return out


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the rank statistic.

    Equals P(score_pos > score_neg) + 0.5 * P(tie), and is therefore
    invariant under any strictly increasing transform of the scores.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auc needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    ranks[order] = np.arange(1, scores.size + 1)
    # average ranks over tied groups
    sorted_scores = scores[order]
    boundaries = np.flatnonzero(np.diff(sorted_scores) != 0) + 1
    group_starts = np.concatenate([[0], boundaries])
    group_ends = np.concatenate([boundaries, [scores.size]])
    for lo, hi in zip(group_starts, group_ends):
        if hi - lo > 1:
            ranks[order[lo:hi]] = 0.5 * (lo + 1 + hi)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def label_segments(labels: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of 1s as half-open (start, end) intervals."""
    labels = np.asarray(labels).astype(np.int8)
    padded = np.concatenate([[0], labels, [0]])
    delta = np.diff(padded)
    starts = np.flatnonzero(delta == 1)
    ends = np.flatnonzero(delta == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def recall_at_k(window_scores: np.ndarray, subseq: SubsequenceSet,
                point_labels: np.ndarray, k: int) -> float:
    """Fraction of anomalous segments hit by the k*n top-scoring windows.

    n is the number of ground-truth segments; a segment counts as found
    when any selected window overlaps it.
    """
    segments = label_segments(point_labels)
    if not segments:
        raise MetricError("recall_at_k needs at least one anomalous segment")
    scores = np.asarray(window_scores, dtype=np.float64)
    budget = min(k * len(segments), scores.size)
    order = np.lexsort((np.arange(scores.size), -scores))[:budget]
    length = subseq.length
    found = 0
    for seg_lo, seg_hi in segments:
        for w in order:
            lo = int(subseq.starts[w])
            if lo < seg_hi and seg_lo < lo + length:
                found += 1
                break
    return found / len(segments)


def best_f1(scores: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Maximum pointwise F1 over thresholds at observed score values.

    Prediction rule: positive when score >= threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise MetricError("best_f1 needs both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_labels = labels[order].astype(np.float64)
    sorted_scores = scores[order]
    tp = np.cumsum(sorted_labels)
    predicted = np.arange(1, scores.size + 1, dtype=np.float64)
    # score >= threshold includes every tied entry: keep only group ends
    is_group_end = np.concatenate([np.diff(sorted_scores) != 0, [True]])
    f1 = 2.0 * tp / (predicted + n_pos)
    f1 = np.where(is_group_end, f1, -1.0)
    best = int(np.argmax(f1))
    return float(f1[best]), float(sorted_scores[best])


def evaluate(window_scores: np.ndarray, subseq: SubsequenceSet,
             point_labels: np.ndarray, ks=(1, 3, 5, 10)) -> MetricReport:
    """Full metric bundle from window scores and point labels."""
    point_labels = np.asarray(point_labels)
    points = aggregate_points(window_scores, subseq,
                              total_length=point_labels.size)
    recalls = {k: recall_at_k(window_scores, subseq, point_labels, k)
               for k in ks}
    f1, thr = best_f1(points, point_labels)
    return MetricReport(auc=auc(points, point_labels), recall_at_k=recalls,
                        best_f1=f1, threshold_at_best_f1=thr)


def format_report(report: MetricReport) -> str:
    """Flat key=value text block for scripting."""
    lines = [f"auc={report.auc!r}"]
    for k in sorted(report.recall_at_k):
        lines.append(f"recall_at_{k}={report.recall_at_k[k]!r}")
    lines.append(f"best_f1={report.best_f1!r}")
    lines.append(f"threshold_at_best_f1={report.threshold_at_best_f1!r}")
    return "\n".join(lines) + "\n"
