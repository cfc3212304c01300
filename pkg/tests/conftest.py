import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coderank.corpus import AuxRecord, Document, LabelDescriptor
from coderank.synthetic import SyntheticSpec, generate_synthetic_corpus

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_doc(did, tokens, labels=(), drg=(), cpt=(), drug=()):
    return Document(did, tuple(tokens), frozenset(labels), AuxRecord(frozenset(drg), frozenset(cpt), frozenset(drug)))


def random_corpus_parts(rng: np.random.Generator, n_docs: int, n_labels: int, n_words: int = 15, n_codes: int = 6):
    """Random docs and descriptors over small shared vocabularies, for oracle comparisons."""
    words = [f"w{chr(97 + i % 26)}{chr(97 + i // 26)}" for i in range(n_words)]
    labels = [f"L{i:02d}" for i in range(n_labels)]
    descs = [LabelDescriptor(y, tuple(rng.choice(words, size=int(rng.integers(1, 5))))) for y in labels]
    docs = []
    for d in range(n_docs):
        gold = rng.choice(labels, size=int(rng.integers(0, min(4, n_labels) + 1)), replace=False)
        pick = lambda p: [f"{p}{int(c)}" for c in rng.choice(n_codes, size=int(rng.integers(0, 3)), replace=False)]
        docs.append(make_doc(f"d{d:03d}", rng.choice(words, size=int(rng.integers(1, 12))), gold,
                             pick("g"), pick("c"), pick("r")))
    return docs, descs


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(3, 240, 24, SyntheticSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
