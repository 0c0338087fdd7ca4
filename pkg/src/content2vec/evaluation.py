"""Link-prediction metrics (ROC-AUC, average precision) and the evaluation
protocol: test positives plus seed-fixed frequency-sampled negatives, scored
by a frozen model, reported per evaluation slice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Catalog, PairSet, sample_negatives
from .errors import DataError


@dataclass(frozen=True)
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray  # bool

    def __post_init__(self):
        if self.scores.shape != self.labels.shape:
            raise DataError(
                f"scores shape {self.scores.shape} != labels shape {self.labels.shape}"
            )
        if not np.all(np.isfinite(self.scores)):
            raise DataError("scores contain non-finite values")


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """P(random positive outscores random negative), ties counted half.

    Computed from midranks in O(n log n); the O(n^2) pair-counting version
    lives in the tests as the oracle.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError(
            f"roc_auc needs both classes, got {n_pos} positives / {n_neg} negatives"
        )
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    # midranks: equal scores share the average of their 1-based rank range
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auprc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Average precision: mean of precision-at-rank over the positives in
    descending score order. Ties keep their input order (stable sort)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise DataError("auprc needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_labels = labels[order]
    cum_pos = np.cumsum(sorted_labels)
    ranks = np.arange(1, labels.size + 1)
    precisions = cum_pos[sorted_labels] / ranks[sorted_labels]
    return float(precisions.mean())


def scored_set_metrics(s: ScoredSet) -> tuple[float, float]:
    return roc_auc(s.scores, s.labels), auprc(s.scores, s.labels)


PairScorer = Callable[[Sequence[tuple[str, str]]], np.ndarray]


def evaluate_link_prediction(
    score_pairs: PairScorer,
    test: PairSet,
    all_positives: frozenset,
    neg_ratio: float = 2.0,
    freq_power: float = 0.75,
    seed: int = 0,
) -> tuple[float, float]:
    """(roc_auc, auprc) over test positives plus negatives sampled once from
    the given seed, excluding every known positive pair. Using one seed for
    several models gives them identical negatives, so their metrics are
    directly comparable.
    """
    batch = sample_negatives(
        test,
        ratio=neg_ratio,
        freq_power=freq_power,
        forbidden=all_positives,
        rng=np.random.default_rng(seed),
    )
    entries = list(zip(batch.ids_a, batch.ids_b))
    scores = np.asarray(score_pairs(entries), dtype=np.float64)
    scored = ScoredSet(scores=scores, labels=batch.labels)
    return scored_set_metrics(scored)


@dataclass(frozen=True)
class ResultRow:
    model: str
    eval_slice: str
    metric: str
    value: float

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise DataError(f"metric value {self.value} outside [0, 1]")


ResultTable = list


def split_pairs_by_category(
    pairs: PairSet, catalog: Catalog, category_a: str, category_b: str
) -> dict[str, PairSet]:
    """Slice pairs into same-A, same-B, and mixed (one endpoint each)."""
    same_a, same_b, mixed = [], [], []
    for a, b, c in pairs:
        ca, cb = catalog[a].category, catalog[b].category
        if ca == category_a and cb == category_a:
            same_a.append((a, b, c))
        elif ca == category_b and cb == category_b:
            same_b.append((a, b, c))
        elif {ca, cb} == {category_a, category_b}:
            mixed.append((a, b, c))
    return {
        category_a: PairSet(same_a),
        category_b: PairSet(same_b),
        "mixed": PairSet(mixed),
    }


def evaluate_cross_category(
    score_pairs: PairScorer,
    slices: dict[str, PairSet],
    all_positives: frozenset,
    model_name: str,
    neg_ratio: float = 2.0,
    freq_power: float = 0.75,
    seed: int = 0,
) -> ResultTable:
    """Evaluate one frozen model on several category slices of the test pairs."""
    rows: ResultTable = []
    for slice_name in slices:
        pairs = slices[slice_name]
        if len(pairs) == 0:
            raise DataError(f"evaluation slice {slice_name!r} has no pairs")
        auc, ap = evaluate_link_prediction(
            score_pairs,
            pairs,
            all_positives,
            neg_ratio=neg_ratio,
            freq_power=freq_power,
            seed=seed,
        )
        rows.append(ResultRow(model_name, slice_name, "roc_auc", auc))
        rows.append(ResultRow(model_name, slice_name, "auprc", ap))
    return rows


def render_table(rows: ResultTable) -> tuple[str, str]:
    """(aligned text, JSON array). Values render as percentages with one
    decimal in the text form; the JSON keeps full precision."""
    header = ("model", "slice", "metric", "value")
    cells = [
        (r.model, r.eval_slice, r.metric, f"{100.0 * r.value:.1f}%") for r in rows
    ]
    widths = [
        max(len(header[i]), *(len(c[i]) for c in cells)) if cells else len(header[i])
        for i in range(4)
    ]
    lines = ["  ".join(header[i].ljust(widths[i]) for i in range(4)).rstrip()]
    for c in cells:
        lines.append("  ".join(c[i].ljust(widths[i]) for i in range(4)).rstrip())
    text = "\n".join(lines) + "\n"
    payload = [
        {
            "model": r.model,
            "slice": r.eval_slice,
            "metric": r.metric,
            "value": r.value,
        }
        for r in rows
    ]
    return text, json.dumps(payload, indent=2, sort_keys=True) + "\n"
