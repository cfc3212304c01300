"""Directed label co-occurrence graph and the graph-biased attention encoder.

Each layer computes ``h <- MHA(LN(h)) + h``. Attention logits of every head get
a learnable scalar bias picked by the relation between query and key node:
same node, directed edge, or no edge. The bias table is shared by all layers.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Document, LabelDescriptor
from .errors import EmptyTrainingSet, IndexOutOfRange, NonFiniteActivation, NoForwardState, ShapeMismatch
from .serialize import array_from_json, array_to_json
from .text_encoder import TextEncoder

SELF, EDGE, NO_EDGE = 0, 1, 2
BUCKET_NAMES = ("self", "edge", "no-edge")
N_BUCKETS = 3
LN_EPS = 1e-5
DEFAULT_LAMBDA = 1.0


@dataclass(frozen=True)
class LabelGraph:
    label_ids: tuple[str, ...]
    label_counts: np.ndarray  # C_{y_i}
    pair_counts: np.ndarray  # C_{y_i & y_j}, symmetric, diagonal = label_counts
    lam: float
    edges: np.ndarray = field(init=False, repr=False)
    cond_prob: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        counts = self.label_counts.astype(np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            cp = np.where(counts[:, None] > 0, self.pair_counts / counts[:, None], 0.0)
        object.__setattr__(self, "cond_prob", cp)
        object.__setattr__(self, "edges", cp >= self.lam)

    @property
    def n(self) -> int:
        return len(self.label_ids)

    def buckets(self) -> np.ndarray:
        b = np.where(self.edges, EDGE, NO_EDGE)
        np.fill_diagonal(b, SELF)
        return b

    def edge_set(self) -> set[tuple[str, str]]:
        ii, jj = np.nonzero(self.edges)
        return {(self.label_ids[i], self.label_ids[j]) for i, j in zip(ii, jj)}

    def permuted(self, perm: Sequence[int]) -> "LabelGraph":
        """Graph with node ``k`` of the result equal to node ``perm[k]`` of this one."""
        p = np.asarray(perm)
        return LabelGraph(
            tuple(self.label_ids[i] for i in p),
            self.label_counts[p],
            self.pair_counts[np.ix_(p, p)],
            self.lam,
        )

    def to_json(self) -> dict:
        ii, jj = np.nonzero(np.triu(self.pair_counts, k=1))
        return {
            "lambda": self.lam,
            "label_ids": list(self.label_ids),
            "label_counts": [int(c) for c in self.label_counts],
            "pair_counts": [[int(i), int(j), int(self.pair_counts[i, j])] for i, j in zip(ii, jj)],
            "edges": [[int(i), int(j)] for i, j in zip(*np.nonzero(self.edges))],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabelGraph":
        n = len(obj["label_ids"])
        counts = np.asarray(obj["label_counts"], dtype=np.int64)
        pairs = np.zeros((n, n), dtype=np.int64)
        for i, j, c in obj["pair_counts"]:
            pairs[i, j] = pairs[j, i] = c
        pairs[np.diag_indices(n)] = counts
        return cls(tuple(obj["label_ids"]), counts, pairs, float(obj["lambda"]))


def build_label_graph(train_docs: Sequence[Document], label_ids: Sequence[str], lam: float = DEFAULT_LAMBDA) -> LabelGraph:
    if not train_docs:
        raise EmptyTrainingSet("cannot build a label graph from zero training documents")
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda={lam} outside (0, 1]")
    pos = {y: i for i, y in enumerate(label_ids)}
    n = len(label_ids)
    counts = np.zeros(n, dtype=np.int64)
    pair: Counter = Counter()
    for doc in train_docs:
        idx = sorted(pos[y] for y in doc.gold_labels)
        counts[idx] += 1
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                pair[idx[a], idx[b]] += 1
    pairs = np.zeros((n, n), dtype=np.int64)
    for (i, j), c in pair.items():
        pairs[i, j] = pairs[j, i] = c
    pairs[np.diag_indices(n)] = counts
    return LabelGraph(tuple(label_ids), counts, pairs, lam)


def spatial_bucket(graph: LabelGraph, i: int, j: int) -> str:
    if not (0 <= i < graph.n and 0 <= j < graph.n):
        raise IndexOutOfRange(f"node pair ({i}, {j}) outside a {graph.n}-node graph")
    if i == j:
        return "self"
    return "edge" if graph.edges[i, j] else "no-edge"


def init_node_features(labels: Sequence[LabelDescriptor], encoder: TextEncoder) -> np.ndarray:
    feats, _ = encoder.forward([lab.descriptor_tokens for lab in labels])
    return feats


@dataclass
class GraphormerParams:
    n_layers: int
    n_heads: int
    hidden: int
    layers: list[dict[str, np.ndarray]]  # ln_gain, ln_bias, wq, wk, wv, wo
    spatial_bias: np.ndarray  # n_heads x 3, shared across layers

    LAYER_KEYS = ("ln_gain", "ln_bias", "wq", "wk", "wv", "wo")

    def __post_init__(self):
        if self.hidden % self.n_heads:
            raise ShapeMismatch(f"hidden={self.hidden} not divisible by n_heads={self.n_heads}")
        if len(self.layers) != self.n_layers:
            raise ShapeMismatch("layer count mismatch")
        if self.spatial_bias.shape != (self.n_heads, N_BUCKETS):
            raise ShapeMismatch(f"spatial bias table must be {self.n_heads} x {N_BUCKETS}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.n_heads

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"layer{i}.{k}": layer[k] for i, layer in enumerate(self.layers) for k in self.LAYER_KEYS}
        out["spatial_bias"] = self.spatial_bias
        return out

    def copy(self) -> "GraphormerParams":
        return GraphormerParams(
            self.n_layers, self.n_heads, self.hidden,
            [{k: v.copy() for k, v in layer.items()} for layer in self.layers],
            self.spatial_bias.copy(),
        )

    def to_json(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "hidden": self.hidden,
            "layers": [{k: array_to_json(layer[k]) for k in self.LAYER_KEYS} for layer in self.layers],
            "spatial_bias": array_to_json(self.spatial_bias),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GraphormerParams":
        return cls(
            int(obj["n_layers"]), int(obj["n_heads"]), int(obj["hidden"]),
            [{k: array_from_json(v) for k, v in layer.items()} for layer in obj["layers"]],
            array_from_json(obj["spatial_bias"]),
        )


def init_graphormer(seed: int, hidden: int = 64, n_layers: int = 2, n_heads: int = 4,
                    out_gain: float = 1.0) -> GraphormerParams:
    """Gaussian weights with std 1/sqrt(hidden); ``wo`` is further scaled by ``out_gain``."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(hidden)
    layers = []
    for _ in range(n_layers):
        layer = {"ln_gain": np.ones(hidden), "ln_bias": np.zeros(hidden)}
        for k in ("wq", "wk", "wv", "wo"):
            layer[k] = rng.normal(0.0, scale, size=(hidden, hidden))
        layer["wo"] *= out_gain
        layers.append(layer)
    return GraphormerParams(n_layers, n_heads, hidden, layers, np.zeros((n_heads, N_BUCKETS)))


@dataclass
class _LayerCache:
    x: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    y: np.ndarray
    q: np.ndarray  # heads x L x dh
    k: np.ndarray
    v: np.ndarray
    attn: np.ndarray  # heads x L x L
    concat: np.ndarray  # L x hidden


@dataclass
class GraphormerCache:
    buckets: np.ndarray
    layers: list[_LayerCache]
    order: np.ndarray | None = None  # canonical node order the layers were run in


def _split_heads(m: np.ndarray, n_heads: int) -> np.ndarray:
    n, h = m.shape
    return m.reshape(n, n_heads, h // n_heads).transpose(1, 0, 2)


def _merge_heads(m: np.ndarray) -> np.ndarray:
    nh, n, dh = m.shape
    return m.transpose(1, 0, 2).reshape(n, nh * dh)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def graphormer_forward(features: np.ndarray, graph: LabelGraph | np.ndarray, params: GraphormerParams):
    """Returns (final-layer node matrix, cache for ``graphormer_backward``).

    ``graph`` may be a LabelGraph or a precomputed bucket matrix. With a LabelGraph
    the nodes are processed sorted by label id, so relabelling the graph permutes
    the output bit for bit (attention sums always run in the same order).
    """
    order = None
    if isinstance(graph, LabelGraph):
        order = np.argsort(np.asarray(graph.label_ids, dtype=object), kind="stable")
        buckets = graph.buckets()[np.ix_(order, order)]
    else:
        buckets = np.asarray(graph)
    h = np.asarray(features, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != buckets.shape[0] or h.shape[1] != params.hidden:
        raise ShapeMismatch(f"features {h.shape} incompatible with {buckets.shape[0]} nodes x hidden {params.hidden}")
    if order is not None:
        h = h[order]
    nh, scale = params.n_heads, 1.0 / np.sqrt(params.head_dim)
    bias = params.spatial_bias[:, buckets]  # heads x L x L
    caches = []
    for layer in params.layers:
        mu = h.mean(axis=1, keepdims=True)
        var = ((h - mu) ** 2).mean(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LN_EPS)
        xhat = (h - mu) * inv_std
        y = xhat * layer["ln_gain"] + layer["ln_bias"]
        q = _split_heads(y @ layer["wq"], nh)
        k = _split_heads(y @ layer["wk"], nh)
        v = _split_heads(y @ layer["wv"], nh)
        attn = _softmax(q @ k.transpose(0, 2, 1) * scale + bias)
        concat = _merge_heads(attn @ v)
        out = concat @ layer["wo"] + h
        caches.append(_LayerCache(h, xhat, inv_std, y, q, k, v, attn, concat))
        h = out
    if not np.all(np.isfinite(h)):
        raise NonFiniteActivation("graph encoder produced non-finite activations")
    if order is not None:
        h = h[np.argsort(order)]
    return h, GraphormerCache(buckets, caches, order)


def graphormer_backward(cache: GraphormerCache | None, grad: np.ndarray, params: GraphormerParams):
    """Returns (parameter gradients keyed like ``params.arrays()``, gradient w.r.t. input features)."""
    if cache is None:
        raise NoForwardState("graph encoder backward called without a recorded forward pass")
    dh = np.array(grad, dtype=np.float64)
    if dh.shape != (cache.buckets.shape[0], params.hidden):
        raise ShapeMismatch(f"upstream gradient shape {dh.shape} does not match node matrix")
    if cache.order is not None:
        dh = dh[cache.order]
    nh, scale = params.n_heads, 1.0 / np.sqrt(params.head_dim)
    grads: dict[str, np.ndarray] = {}
    d_bias = np.zeros_like(params.spatial_bias)
    masks = [cache.buckets == c for c in range(N_BUCKETS)]
    for li in reversed(range(params.n_layers)):
        layer, c = params.layers[li], cache.layers[li]
        grads[f"layer{li}.wo"] = c.concat.T @ dh
        d_o = _split_heads(dh @ layer["wo"].T, nh)
        d_attn = d_o @ c.v.transpose(0, 2, 1)
        d_v = c.attn.transpose(0, 2, 1) @ d_o
        d_logits = c.attn * (d_attn - (d_attn * c.attn).sum(axis=-1, keepdims=True))
        for b, m in enumerate(masks):
            d_bias[:, b] += (d_logits * m).sum(axis=(1, 2))
        d_q = d_logits @ c.k * scale
        d_k = d_logits.transpose(0, 2, 1) @ c.q * scale
        d_q, d_k, d_v = _merge_heads(d_q), _merge_heads(d_k), _merge_heads(d_v)
        grads[f"layer{li}.wq"] = c.y.T @ d_q
        grads[f"layer{li}.wk"] = c.y.T @ d_k
        grads[f"layer{li}.wv"] = c.y.T @ d_v
        d_y = d_q @ layer["wq"].T + d_k @ layer["wk"].T + d_v @ layer["wv"].T
        grads[f"layer{li}.ln_gain"] = (d_y * c.xhat).sum(axis=0)
        grads[f"layer{li}.ln_bias"] = d_y.sum(axis=0)
        d_xhat = d_y * layer["ln_gain"]
        d_x = c.inv_std * (
            d_xhat - d_xhat.mean(axis=1, keepdims=True) - c.xhat * (d_xhat * c.xhat).mean(axis=1, keepdims=True)
        )
        dh = dh + d_x  # residual path plus layer-norm path
    grads["spatial_bias"] = d_bias
    if cache.order is not None:
        dh = dh[np.argsort(cache.order)]
    return grads, dh
