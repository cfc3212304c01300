"""Composition of the two retrieval stages with the empty-candidate fallback."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aux_retrieval import AUX_STAGE, DEFAULT_ETA, CandidateSet, CooccurrenceIndex, retrieve_candidates_aux
from .bm25 import Bm25Index, Bm25Params, filter_bm25, score_candidates
from .corpus import Document

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Retrieved:
    aux: CandidateSet
    bm25: CandidateSet

    @property
    def final(self) -> CandidateSet:
        return self.bm25


def retrieve(doc: Document, aux_index: CooccurrenceIndex, bm25_index: Bm25Index, label_ids: Sequence[str],
             eta: float = DEFAULT_ETA, bm25_params: Bm25Params | None = None, fallback: bool = True,
             use_aux: bool = True) -> Retrieved:
    """Auxiliary stage, then BM25 over exactly its output.

    With ``use_aux=False`` the first stage is skipped and BM25 sees the whole
    vocabulary. An empty first stage is replaced by the whole vocabulary when
    ``fallback`` is set, and flagged on the candidate set.
    """
    if use_aux:
        aux = retrieve_candidates_aux(doc, aux_index, eta)
        if not aux.labels and fallback:
            log.debug("document %s: empty auxiliary candidates, falling back to full vocabulary", doc.id)
            aux = CandidateSet(doc.id, frozenset(label_ids), AUX_STAGE, fallback=True)
    else:
        aux = CandidateSet(doc.id, frozenset(label_ids), AUX_STAGE)
    return Retrieved(aux, filter_bm25(doc, aux, bm25_index, bm25_params))


def calibrate_theta(docs: Sequence[Document], aux_sets: Sequence[CandidateSet], bm25_index: Bm25Index,
                    params: Bm25Params | None = None, retain: float = 0.995, n_grid: int = 101) -> float:
    """Largest grid threshold keeping at least ``retain`` of the gold labels that
    survive the auxiliary stage.

    The grid spans [0, max gold score] in ``n_grid`` points and admission uses the
    same strict ``score > theta`` rule as the filter. Returns -1 (keep everything)
    when no grid point qualifies.
    """
    params = params or Bm25Params()
    gold_scores = []
    for doc, cs in zip(docs, aux_sets):
        hits = doc.gold_labels & cs.labels
        gold_scores.extend(score_candidates(doc, hits, bm25_index, params).values())
    if not gold_scores:
        return -1.0
    s = np.asarray(gold_scores)
    grid = np.linspace(0.0, float(s.max()), n_grid)
    best = -1.0
    for t in grid:
        if (s > t).mean() >= retain:
            best = float(t)
    return best
