"""First retrieval stage: auxiliary code -> label conditional probabilities."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import AUX_KINDS, Document
from .errors import ConfigError, EmptyTrainingSet, MismatchedIds

AuxCode = tuple[str, str]  # (kind, code)

AUX_STAGE = "auxiliary"
BM25_STAGE = "bm25"
DEFAULT_ETA = 0.005


@dataclass(frozen=True)
class CooccurrenceIndex:
    pair_counts: dict[AuxCode, dict[str, int]]
    marginal_counts: dict[AuxCode, int]

    def cond_prob(self, k: AuxCode, y: str) -> float:
        c_k = self.marginal_counts.get(k, 0)
        if c_k == 0:
            return 0.0
        return self.pair_counts.get(k, {}).get(y, 0) / c_k

    def cond_probs(self, k: AuxCode) -> dict[str, float]:
        c_k = self.marginal_counts.get(k, 0)
        return {y: c / c_k for y, c in self.pair_counts.get(k, {}).items()}

    def to_json(self) -> dict:
        marg: dict[str, dict[str, int]] = {kind: {} for kind in AUX_KINDS}
        pairs: dict[str, dict[str, dict[str, int]]] = {kind: {} for kind in AUX_KINDS}
        for (kind, code), c in sorted(self.marginal_counts.items()):
            marg[kind][code] = c
            pairs[kind][code] = dict(sorted(self.pair_counts.get((kind, code), {}).items()))
        return {"marginal_counts": marg, "pair_counts": pairs}

    @classmethod
    def from_json(cls, obj: dict) -> "CooccurrenceIndex":
        marginal = {(kind, code): int(c) for kind, codes in obj["marginal_counts"].items() for code, c in codes.items()}
        pairs = {
            (kind, code): {y: int(c) for y, c in ys.items()}
            for kind, codes in obj["pair_counts"].items()
            for code, ys in codes.items()
        }
        return cls(pairs, marginal)


@dataclass(frozen=True)
class CandidateSet:
    doc_id: str
    labels: frozenset[str]
    stage: str = AUX_STAGE
    # set when retrieval came back empty and the full vocabulary was substituted
    fallback: bool = False


@dataclass
class CoverageStats:
    recall: float
    mean_size: float
    n_docs: int
    n_gold: int
    n_covered: int
    n_empty: int = 0
    per_doc_size: list[int] = field(default_factory=list, repr=False)


def _count(docs: Iterable[Document]) -> tuple[Counter, dict[AuxCode, Counter]]:
    marginal: Counter = Counter()
    pairs: dict[AuxCode, Counter] = {}
    for doc in docs:
        # sets, so a document contributes at most one count per (code, label)
        for k in doc.aux.codes():
            marginal[k] += 1
            bucket = pairs.setdefault(k, Counter())
            for y in doc.gold_labels:
                bucket[y] += 1
    return marginal, pairs


def build_aux_index(train_docs: Sequence[Document]) -> CooccurrenceIndex:
    if not train_docs:
        raise EmptyTrainingSet("cannot build an auxiliary index from zero training documents")
    marginal, pairs = _count(train_docs)
    return CooccurrenceIndex(
        pair_counts={k: dict(sorted(v.items())) for k, v in sorted(pairs.items())},
        marginal_counts=dict(sorted(marginal.items())),
    )


def merge_indexes(parts: Iterable[CooccurrenceIndex]) -> CooccurrenceIndex:
    """Sum counts from independently built shards; order of shards does not matter."""
    marginal: Counter = Counter()
    pairs: dict[AuxCode, Counter] = {}
    for part in parts:
        marginal.update(part.marginal_counts)
        for k, ys in part.pair_counts.items():
            pairs.setdefault(k, Counter()).update(ys)
    return CooccurrenceIndex(
        pair_counts={k: dict(sorted(v.items())) for k, v in sorted(pairs.items())},
        marginal_counts=dict(sorted(marginal.items())),
    )


def selected_labels_for_code(index: CooccurrenceIndex, k: AuxCode, eta: float = DEFAULT_ETA) -> set[str]:
    if not 0.0 <= eta <= 1.0:
        raise ConfigError(f"eta={eta} outside [0, 1]")
    return {y for y, p in index.cond_probs(k).items() if p > eta}


def retrieve_candidates_aux(doc: Document, index: CooccurrenceIndex, eta: float = DEFAULT_ETA) -> CandidateSet:
    labels: set[str] = set()
    for k in doc.aux.codes():
        labels |= selected_labels_for_code(index, k, eta)
    return CandidateSet(doc.id, frozenset(labels), AUX_STAGE)


def coverage_report(candidates: Sequence[CandidateSet], docs: Sequence[Document]) -> CoverageStats:
    if [c.doc_id for c in candidates] != [d.id for d in docs]:
        raise MismatchedIds("candidate sets and documents are not aligned by id")
    n_gold = n_cov = n_empty = 0
    sizes = []
    for c, d in zip(candidates, docs):
        n_gold += len(d.gold_labels)
        n_cov += len(d.gold_labels & c.labels)
        sizes.append(len(c.labels))
        n_empty += not c.labels
    return CoverageStats(
        recall=n_cov / n_gold if n_gold else 0.0,
        mean_size=sum(sizes) / len(sizes) if sizes else 0.0,
        n_docs=len(docs),
        n_gold=n_gold,
        n_covered=n_cov,
        n_empty=n_empty,
        per_doc_size=sizes,
    )
