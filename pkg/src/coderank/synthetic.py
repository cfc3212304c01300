"""Seeded synthetic corpus with planted lexical cues, auxiliary-code correlations
and an always-co-occurring label pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import AuxRecord, Corpus, Document, LabelDescriptor, Split
from .errors import InvalidSpec

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SyntheticSpec:
    # P(cue token of a gold label appears in the document)
    cue_prob: float = 1.0
    labels_per_doc: tuple[int, int] = (5, 8)
    doc_len: tuple[int, int] = (40, 80)
    filler_vocab: int = 3000
    # words shared between label descriptors and document background; with rate 1
    # the background is drawn from them only and the filler words go unused
    generic_vocab: int = 100
    generic_rate: float = 1.0
    descriptor_generic: int = 3
    # background generic words avoid the descriptors of the document's own labels,
    # so lexical overlap on them marks non-gold labels
    generic_avoid_gold: bool = True
    # label popularity ~ 1 / (rank + offset) ** exponent
    zipf_exponent: float = 1.0
    zipf_offset: float = 8.0
    drg_group_size: int = 20
    cpt_group_size: int = 5
    # P(label's linked code of this kind is attached | label is gold)
    p_drg: float = 0.8
    p_cpt: float = 0.7
    p_drug: float = 0.9
    # label-independent codes per document, drawn from a shared pool per kind
    noise_codes: int = 1
    noise_pool: int = 20
    planted_pair: tuple[int, int] | None = (0, 1)
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def validate(self, n_labels: int) -> None:
        for name in ("cue_prob", "generic_rate", "p_drg", "p_cpt", "p_drug"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidSpec(f"{name}={p} is not a probability")
        if any(not 0.0 <= f <= 1.0 for f in self.split_fractions) or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise InvalidSpec(f"split_fractions {self.split_fractions} must be probabilities summing to 1")
        lo, hi = self.labels_per_doc
        if not 1 <= lo <= hi:
            raise InvalidSpec(f"labels_per_doc {self.labels_per_doc} is not a valid range")
        lo, hi = self.doc_len
        if not 0 <= lo <= hi:
            raise InvalidSpec(f"doc_len {self.doc_len} is not a valid range")
        if self.filler_vocab < 1 or self.generic_vocab < self.descriptor_generic:
            raise InvalidSpec("vocabulary sizes too small")
        if self.drg_group_size < 1 or self.cpt_group_size < 1 or self.noise_pool < 1 or self.noise_codes < 0:
            raise InvalidSpec("group and pool sizes must be positive")
        if self.planted_pair is not None:
            a, b = self.planted_pair
            if a == b or not (0 <= a < n_labels and 0 <= b < n_labels):
                raise InvalidSpec(f"planted_pair {self.planted_pair} invalid for {n_labels} labels")


def _make_words(rng: np.random.Generator, n: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < n:
        n_syl = int(rng.integers(2, 5))
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(n_syl))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def label_id(i: int) -> str:
    return f"Y{i:04d}"


def generate_synthetic_corpus(seed: int, n_docs: int, n_labels: int, spec: SyntheticSpec | None = None) -> Corpus:
    spec = spec or SyntheticSpec()
    if n_docs < 1 or n_labels < 1:
        raise InvalidSpec("n_docs and n_labels must be >= 1")
    spec.validate(n_labels)
    rng = np.random.default_rng(seed)

    words = _make_words(rng, n_labels + spec.generic_vocab + spec.filler_vocab)
    cues = words[:n_labels]
    generic = words[n_labels:n_labels + spec.generic_vocab]
    filler = words[n_labels + spec.generic_vocab:]

    labels = []
    for i in range(n_labels):
        extra = rng.choice(len(generic), size=spec.descriptor_generic, replace=False)
        labels.append(LabelDescriptor(label_id(i), (cues[i], *(generic[j] for j in sorted(extra)))))

    # shuffled so label index does not encode frequency
    ranks = rng.permutation(n_labels)
    weights = 1.0 / (ranks + spec.zipf_offset) ** spec.zipf_exponent
    weights /= weights.sum()

    drg_group = rng.permutation(n_labels) // spec.drg_group_size
    cpt_group = rng.permutation(n_labels) // spec.cpt_group_size

    docs = []
    for d in range(n_docs):
        k = min(int(rng.integers(spec.labels_per_doc[0], spec.labels_per_doc[1] + 1)), n_labels)
        gold = set(int(y) for y in rng.choice(n_labels, size=k, replace=False, p=weights))
        if spec.planted_pair is not None:
            a, b = spec.planted_pair
            if a in gold or b in gold:
                gold |= {a, b}

        background = generic
        if spec.generic_avoid_gold:
            own = {t for y in gold for t in labels[y].descriptor_tokens[1:]}
            background = [w for w in generic if w not in own] or generic
        n_fill = int(rng.integers(spec.doc_len[0], spec.doc_len[1] + 1))
        is_generic = rng.random(n_fill) < spec.generic_rate
        tokens = [
            background[rng.integers(len(background))] if g else filler[rng.integers(len(filler))]
            for g in is_generic
        ]
        for y in sorted(gold):
            if rng.random() < spec.cue_prob:
                tokens.insert(int(rng.integers(len(tokens) + 1)), cues[y])

        drg, cpt, drug = set(), set(), set()
        for y in sorted(gold):
            if rng.random() < spec.p_drg:
                drg.add(f"D{drg_group[y]:03d}")
            if rng.random() < spec.p_cpt:
                cpt.add(f"P{cpt_group[y]:03d}")
            if rng.random() < spec.p_drug:
                drug.add(f"R{y:04d}")
        for _ in range(spec.noise_codes):
            kind = int(rng.integers(3))
            code = int(rng.integers(spec.noise_pool))
            (drg, cpt, drug)[kind].add(("DN", "PN", "RN")[kind] + f"{code:03d}")

        docs.append(Document(
            id=f"doc{d:06d}",
            tokens=tuple(tokens),
            gold_labels=frozenset(label_id(y) for y in gold),
            aux=AuxRecord(frozenset(drg), frozenset(cpt), frozenset(drug)),
        ))

    order = rng.permutation(n_docs)
    f_train, f_valid, _ = spec.split_fractions
    n_train = max(1, int(round(f_train * n_docs)))
    n_valid = min(n_docs - n_train, int(round(f_valid * n_docs)))
    ids = [docs[i].id for i in order]
    split = Split(
        train=tuple(sorted(ids[:n_train])),
        valid=tuple(sorted(ids[n_train:n_train + n_valid])),
        test=tuple(sorted(ids[n_train + n_valid:])),
    )
    return Corpus(tuple(docs), tuple(labels), split)
