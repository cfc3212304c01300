"""Second retrieval stage: BM25 between document tokens and label descriptors.

The scored "collection" is the set of label descriptors; the document acts as
the query, and each distinct document token that appears in a descriptor adds
one term.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .aux_retrieval import AUX_STAGE, BM25_STAGE, CandidateSet
from .corpus import Document, LabelDescriptor
from .errors import ConfigError, EmptyDescriptor, EmptyLabelSet, UnknownLabel

DEFAULT_THETA = 200.0

OKAPI = "okapi"
PRINTED = "printed"


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75
    theta: float = DEFAULT_THETA
    # OKAPI: tf + k1*norm in the denominator; PRINTED: tf * k1*norm
    denominator: str = OKAPI

    def __post_init__(self):
        if not self.k1 >= 0:
            raise ConfigError(f"k1={self.k1} must be >= 0")
        if not 0.0 <= self.b <= 1.0:
            raise ConfigError(f"b={self.b} must lie in [0, 1]")
        if self.denominator not in (OKAPI, PRINTED):
            raise ConfigError(f"unknown BM25 denominator form {self.denominator!r}")
        if self.denominator == PRINTED and self.k1 == 0:
            raise ConfigError("the printed denominator form divides by k1; k1 must be > 0")


@dataclass(frozen=True)
class Bm25Index:
    doc_freq: dict[str, int]
    term_freq: dict[str, dict[str, int]]  # label -> token -> count
    descriptor_len: dict[str, int]
    avgdl: float
    n_labels: int

    def idf(self, w: str) -> float:
        df = self.doc_freq.get(w, 0)
        n = self.n_labels
        return max(0.0, math.log((n - df + 0.5) / (df + 0.5)))

    def to_json(self) -> dict:
        return {
            "n_labels": self.n_labels,
            "avgdl": self.avgdl,
            "doc_freq": self.doc_freq,
            "descriptor_len": self.descriptor_len,
            "term_freq": self.term_freq,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Bm25Index":
        return cls(
            doc_freq={w: int(c) for w, c in obj["doc_freq"].items()},
            term_freq={y: {w: int(c) for w, c in tf.items()} for y, tf in obj["term_freq"].items()},
            descriptor_len={y: int(n) for y, n in obj["descriptor_len"].items()},
            avgdl=float(obj["avgdl"]),
            n_labels=int(obj["n_labels"]),
        )


def build_bm25_index(labels: Sequence[LabelDescriptor]) -> Bm25Index:
    if not labels:
        raise EmptyLabelSet("cannot index an empty label set")
    df: Counter = Counter()
    tf: dict[str, dict[str, int]] = {}
    lengths: dict[str, int] = {}
    for lab in labels:
        if not lab.descriptor_tokens:
            raise EmptyDescriptor(f"label {lab.id!r} has an empty descriptor")
        counts = Counter(lab.descriptor_tokens)
        tf[lab.id] = dict(sorted(counts.items()))
        lengths[lab.id] = len(lab.descriptor_tokens)
        df.update(counts.keys())
    return Bm25Index(
        doc_freq=dict(sorted(df.items())),
        term_freq=tf,
        descriptor_len=lengths,
        avgdl=sum(lengths.values()) / len(labels),
        n_labels=len(labels),
    )


def _score(tokens: Iterable[str], y: str, index: Bm25Index, params: Bm25Params) -> float:
    tf_y = index.term_freq.get(y)
    if tf_y is None:
        raise UnknownLabel(f"label {y!r} is not in the BM25 index")
    norm = params.k1 * (1.0 - params.b + params.b * index.descriptor_len[y] / index.avgdl)
    score = 0.0
    for w in sorted(set(tokens) & tf_y.keys()):
        tf = tf_y[w]
        denom = tf + norm if params.denominator == OKAPI else tf * norm
        score += index.idf(w) * tf * (params.k1 + 1.0) / denom
    return score


def bm25_score(doc: Document, y: str, index: Bm25Index, params: Bm25Params | None = None) -> float:
    return _score(doc.tokens, y, index, params or Bm25Params())


def filter_bm25(doc: Document, cands: CandidateSet, index: Bm25Index, params: Bm25Params | None = None) -> CandidateSet:
    params = params or Bm25Params()
    if cands.stage != AUX_STAGE:
        raise ValueError(f"expected an {AUX_STAGE!r}-stage candidate set, got {cands.stage!r}")
    doc_tokens = set(doc.tokens)
    kept = frozenset(y for y in cands.labels if _score(doc_tokens, y, index, params) > params.theta)
    return CandidateSet(doc.id, kept, BM25_STAGE, cands.fallback)


def score_candidates(doc: Document, labels: Iterable[str], index: Bm25Index, params: Bm25Params | None = None) -> dict[str, float]:
    params = params or Bm25Params()
    doc_tokens = set(doc.tokens)
    return {y: _score(doc_tokens, y, index, params) for y in sorted(labels)}
