"""Token-sequence encoder producing one pooled vector per sequence.

The shipped encoder averages trainable token embeddings and passes the mean
through an affine projection and tanh. Anything implementing ``TextEncoder``
(forward over a batch returning a cache, backward from that cache) can replace
it without touching the label graph or the re-ranker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import EmptyInput, EmptyVocab, NoForwardState, ShapeMismatch
from .serialize import array_from_json, array_to_json

UNK = "<unk>"
DEFAULT_HIDDEN = 64


@dataclass
class EncoderParams:
    vocab: tuple[str, ...]
    embedding: np.ndarray  # V x h, row 0 is UNK
    proj: np.ndarray  # h x h
    bias: np.ndarray  # h
    seed: int = 0
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.vocab or self.vocab[0] != UNK:
            raise ValueError("vocab must start with the UNK token")
        self.index = {t: i for i, t in enumerate(self.vocab)}
        v, h = self.embedding.shape
        if v != len(self.vocab) or self.proj.shape != (h, h) or self.bias.shape != (h,):
            raise ShapeMismatch("encoder parameter shapes are inconsistent")

    @property
    def hidden(self) -> int:
        return self.embedding.shape[1]

    def rows(self, tokens: Iterable[str]) -> np.ndarray:
        # sorted, so pooling sums in the same order for any permutation of the tokens
        return np.sort(np.fromiter((self.index.get(t, 0) for t in tokens), dtype=np.int64))

    def arrays(self) -> dict[str, np.ndarray]:
        return {"embedding": self.embedding, "proj": self.proj, "bias": self.bias}

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.vocab, self.embedding.copy(), self.proj.copy(), self.bias.copy(), self.seed)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "h_e": self.hidden,
            "vocab": list(self.vocab),
            "embedding": array_to_json(self.embedding),
            "proj": array_to_json(self.proj),
            "bias": array_to_json(self.bias),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EncoderParams":
        return cls(
            vocab=tuple(obj["vocab"]),
            embedding=array_from_json(obj["embedding"]),
            proj=array_from_json(obj["proj"]),
            bias=array_from_json(obj["bias"]),
            seed=int(obj["seed"]),
        )


@dataclass(frozen=True)
class PooledVector:
    values: np.ndarray
    source_len: int


def build_vocab(token_seqs: Iterable[Sequence[str]]) -> tuple[str, ...]:
    tokens = set()
    for seq in token_seqs:
        tokens.update(seq)
    tokens.discard(UNK)
    return (UNK, *sorted(tokens))


def init_params(seed: int, vocab: Iterable[str], h_e: int = DEFAULT_HIDDEN) -> EncoderParams:
    vocab = tuple(vocab)
    if not vocab or vocab == (UNK,):
        raise EmptyVocab("encoder vocabulary is empty")
    if vocab[0] != UNK:
        vocab = (UNK, *(t for t in vocab if t != UNK))
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(h_e)
    return EncoderParams(
        vocab=vocab,
        embedding=rng.normal(0.0, scale, size=(len(vocab), h_e)),
        proj=rng.normal(0.0, scale, size=(h_e, h_e)),
        bias=np.zeros(h_e),
        seed=seed,
    )


@dataclass
class EncoderCache:
    rows: list[np.ndarray]
    mean: np.ndarray  # n x h
    out: np.ndarray  # n x h


class TextEncoder(Protocol):
    hidden: int

    def encode(self, tokens: Sequence[str]) -> PooledVector: ...

    def forward(self, seqs: Sequence[Sequence[str]]) -> tuple[np.ndarray, object]: ...

    def backward(self, cache: object, grad: np.ndarray) -> dict[str, np.ndarray]: ...


class MeanPoolEncoder:
    def __init__(self, params: EncoderParams):
        self.params = params

    @property
    def hidden(self) -> int:
        return self.params.hidden

    def encode(self, tokens: Sequence[str]) -> PooledVector:
        return encode(tokens, self.params)

    def forward(self, seqs: Sequence[Sequence[str]]) -> tuple[np.ndarray, EncoderCache]:
        p = self.params
        rows = []
        mean = np.empty((len(seqs), p.hidden))
        for i, seq in enumerate(seqs):
            if len(seq) == 0:
                raise EmptyInput(f"sequence {i} is empty")
            r = p.rows(seq)
            rows.append(r)
            mean[i] = p.embedding[r].mean(axis=0)
        out = np.tanh(mean @ p.proj + p.bias)
        return out, EncoderCache(rows, mean, out)

    def backward(self, cache: EncoderCache | None, grad: np.ndarray) -> dict[str, np.ndarray]:
        if cache is None:
            raise NoForwardState("encoder backward called without a recorded forward pass")
        p = self.params
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != cache.out.shape:
            raise ShapeMismatch(f"upstream gradient shape {grad.shape} != output shape {cache.out.shape}")
        dz = grad * (1.0 - cache.out**2)
        d_mean = dz @ p.proj.T
        d_emb = np.zeros_like(p.embedding)
        for r, g in zip(cache.rows, d_mean):
            np.add.at(d_emb, r, g / len(r))
        return {"embedding": d_emb, "proj": cache.mean.T @ dz, "bias": dz.sum(axis=0)}


def encode(tokens: Sequence[str], params: EncoderParams) -> PooledVector:
    if len(tokens) == 0:
        raise EmptyInput("cannot encode an empty token sequence")
    mean = params.embedding[params.rows(tokens)].mean(axis=0)
    return PooledVector(np.tanh(mean @ params.proj + params.bias), len(tokens))
