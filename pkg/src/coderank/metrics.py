"""Micro/macro F1, micro/macro ROC-AUC and precision@K for multi-label output."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import MismatchedIds, NoValidLabels

log = logging.getLogger(__name__)

# score given to labels outside a document's candidate set; below any cosine
UNRANKED_SCORE = -1.0

FREQ_BUCKETS = ((0, 10), (10, 50), (50, 500), (500, None))


def _check_ids(a: Mapping, b: Mapping, what: str) -> list[str]:
    if set(a) != set(b):
        raise MismatchedIds(f"gold and {what} cover different documents")
    return sorted(a)


@dataclass
class LabelCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


def confusion(gold: Mapping[str, set], pred: Mapping[str, set], labels: Sequence[str]) -> dict[str, LabelCounts]:
    ids = _check_ids(gold, pred, "predictions")
    counts = {y: LabelCounts() for y in labels}
    for i in ids:
        g, p = gold[i], pred[i]
        for y in p & g:
            if y in counts:
                counts[y].tp += 1
        for y in p - g:
            if y in counts:
                counts[y].fp += 1
        for y in g - p:
            if y in counts:
                counts[y].fn += 1
    return counts


def f1_from_counts(counts: Mapping[str, LabelCounts]) -> tuple[float, float]:
    if not counts:
        return 0.0, 0.0
    macro = float(np.mean([c.f1 for c in counts.values()]))
    pooled = LabelCounts(
        sum(c.tp for c in counts.values()),
        sum(c.fp for c in counts.values()),
        sum(c.fn for c in counts.values()),
    )
    return macro, pooled.f1


def f1_scores(gold: Mapping[str, set], pred: Mapping[str, set], labels: Sequence[str]) -> tuple[float, float]:
    """(macro, micro) F1. Per-label 0/0 counts as 0 in the macro mean."""
    return f1_from_counts(confusion(gold, pred, labels))


def _auc(scores: np.ndarray, positive: np.ndarray) -> float:
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    ranks = rankdata(scores)  # midranks for ties
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def score_matrix(gold: Mapping[str, set], scores: Mapping[str, Mapping[str, float]], labels: Sequence[str]):
    ids = _check_ids(gold, scores, "scores")
    col = {y: j for j, y in enumerate(labels)}
    s = np.full((len(ids), len(labels)), UNRANKED_SCORE)
    g = np.zeros((len(ids), len(labels)), dtype=bool)
    for i, d in enumerate(ids):
        for y, v in scores[d].items():
            if y in col:
                s[i, col[y]] = v
        for y in gold[d]:
            if y in col:
                g[i, col[y]] = True
    return s, g


def per_label_auc(s: np.ndarray, g: np.ndarray) -> np.ndarray:
    out = np.full(s.shape[1], np.nan)
    for j in range(s.shape[1]):
        pos = g[:, j]
        if pos.any() and not pos.all():
            out[j] = _auc(s[:, j], pos)
    return out


def auc_scores(gold: Mapping[str, set], scores: Mapping[str, Mapping[str, float]],
               labels: Sequence[str]) -> tuple[float, float]:
    """(macro, micro) ROC-AUC. Missing (doc, label) scores count as ``UNRANKED_SCORE``."""
    s, g = score_matrix(gold, scores, labels)
    per = per_label_auc(s, g)
    valid = ~np.isnan(per)
    if not valid.any():
        raise NoValidLabels("no label has both positive and negative instances")
    flat_g = g.ravel()
    if flat_g.all() or not flat_g.any():
        raise NoValidLabels("pooled instances are all one class")
    return float(per[valid].mean()), _auc(s.ravel(), flat_g)


def precision_at_k(gold: Mapping[str, set], ranked: Mapping[str, Sequence[str]], k: int) -> float:
    value, _ = precision_at_k_detail(gold, ranked, k)
    return value


def precision_at_k_detail(gold: Mapping[str, set], ranked: Mapping[str, Sequence[str]], k: int) -> tuple[float, int]:
    """Mean |top-k & gold| / min(k, list length); also returns how many lists were shorter than k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gold:
        return 0.0, 0
    total, short = 0.0, 0
    for d, g in gold.items():
        top = list(ranked.get(d, ()))[:k]
        if len(top) < k:
            short += 1
        if top:
            total += len(set(top) & g) / len(top)
    if short:
        log.debug("P@%d: %d ranked lists shorter than k", k, short)
    return total / len(gold), short


@dataclass
class EvalReport:
    macro_f1: float
    micro_f1: float
    macro_auc: float
    micro_auc: float
    p_at_k: dict[int, float]
    short_lists: dict[int, int] = field(default_factory=dict)
    per_label: dict[str, dict] = field(default_factory=dict)
    buckets: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "macro_auc": self.macro_auc,
            "micro_auc": self.micro_auc,
            "p_at_k": {str(k): v for k, v in sorted(self.p_at_k.items())},
            "short_lists": {str(k): v for k, v in sorted(self.short_lists.items())},
            "buckets": self.buckets,
            "per_label": self.per_label,
        }


def frequency_bucket(freq: int) -> str:
    for lo, hi in FREQ_BUCKETS:
        if freq >= lo and (hi is None or freq < hi):
            return f"[{lo},{'inf' if hi is None else hi})"
    raise ValueError(f"negative frequency {freq}")


def evaluate(gold: Mapping[str, set], pred: Mapping[str, set], ranked: Mapping[str, Sequence[tuple[str, float]]],
             labels: Sequence[str], ks: Sequence[int] = (5, 8, 15),
             train_freq: Mapping[str, int] | None = None) -> EvalReport:
    """Full report. ``ranked`` maps doc id to (label, score) pairs in rank order."""
    counts = confusion(gold, pred, labels)
    macro_f1, micro_f1 = f1_from_counts(counts)
    scores = {d: dict(r) for d, r in ranked.items()}
    s, g = score_matrix(gold, scores, labels)
    per_auc = per_label_auc(s, g)
    valid = ~np.isnan(per_auc)
    macro_auc = float(per_auc[valid].mean()) if valid.any() else float("nan")
    flat = g.ravel()
    micro_auc = _auc(s.ravel(), flat) if flat.any() and not flat.all() else float("nan")

    order = {d: [y for y, _ in r] for d, r in ranked.items()}
    p_at_k, short = {}, {}
    for k in ks:
        p_at_k[k], short[k] = precision_at_k_detail(gold, order, k)

    per_label = {}
    for j, y in enumerate(labels):
        c = counts[y]
        per_label[y] = {"tp": c.tp, "fp": c.fp, "fn": c.fn, "f1": c.f1,
                        "auc": None if np.isnan(per_auc[j]) else float(per_auc[j])}
        if train_freq is not None:
            per_label[y]["train_freq"] = int(train_freq.get(y, 0))
            per_label[y]["bucket"] = frequency_bucket(per_label[y]["train_freq"])

    buckets = []
    if train_freq is not None:
        for lo, hi in FREQ_BUCKETS:
            name = frequency_bucket(lo)
            members = [j for j, y in enumerate(labels) if frequency_bucket(int(train_freq.get(y, 0))) == name]
            sub = {labels[j]: counts[labels[j]] for j in members}
            b_macro_f1, b_micro_f1 = f1_from_counts(sub)
            aucs = [per_auc[j] for j in members if not np.isnan(per_auc[j])]
            buckets.append({
                "bucket": name,
                "n_labels": len(members),
                "train_occurrences": int(sum(train_freq.get(labels[j], 0) for j in members)),
                "micro_f1": b_micro_f1 if members else None,
                "macro_f1": b_macro_f1 if members else None,
                "macro_auc": float(np.mean(aucs)) if aucs else None,
            })
    return EvalReport(macro_f1, micro_f1, macro_auc, micro_auc, p_at_k, short, per_label, buckets)
