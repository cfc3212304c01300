"""Contrastive re-ranker: document vs. label embeddings, trained end to end.

A document is pulled toward its gold labels and pushed away from labels sampled
from the other documents of its batch. At inference the candidate labels are
sorted by cosine similarity to the document vector.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .aux_retrieval import CandidateSet
from .corpus import Corpus, Document
from .errors import (
    ConfigError,
    DegenerateBatch,
    EmptyPositives,
    InvalidPolicy,
    NonFiniteLoss,
    UnknownLabel,
    ZeroVector,
)
from .label_graph import (
    GraphormerParams,
    LabelGraph,
    graphormer_backward,
    graphormer_forward,
    init_graphormer,
)
from .seeding import stage_seed
from .serialize import array_from_json, array_to_json, read_artifact, write_artifact
from .text_encoder import EncoderParams, MeanPoolEncoder, build_vocab, encode, init_params

log = logging.getLogger(__name__)

PRINTED = "printed"
CONVENTIONAL = "conventional"
CHECKPOINT_FORMAT = "coderank-checkpoint"
CHECKPOINT_VERSION = 1
THRESHOLD_GRID = np.linspace(-1.0, 1.0, 101)


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 1.0
    batch_size: int = 16
    learning_rate: float = 5e-5
    epochs: int = 10
    seed: int = 0
    warmup_ratio: float = 0.1
    early_stop_metric: str = "micro_f1"
    # epochs without validation improvement before stopping; None trains all epochs
    patience: int | None = None
    optimizer: str = "sgd"
    # decoupled decay on embedding and weight matrices (not norms, biases, spatial table)
    weight_decay: float = 0.0
    # PRINTED: temperature divides S and D outside the exponentials (and cancels);
    # CONVENTIONAL: temperature scales the cosines inside them
    loss_form: str = PRINTED
    per_positive: bool = False
    # learning-rate multiplier for graph-encoder parameters; their layer-normed branch
    # is much larger than the tanh-bounded descriptor encodings it is added to
    graph_lr_scale: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau={self.tau} must be > 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if min(self.epochs, self.learning_rate, self.weight_decay, self.graph_lr_scale) < 0:
            raise ConfigError("epochs, learning_rate, weight_decay and graph_lr_scale must be non-negative")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ConfigError("warmup_ratio must lie in [0, 1]")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.loss_form not in (PRINTED, CONVENTIONAL):
            raise ConfigError(f"unknown loss form {self.loss_form!r}")
        if self.early_stop_metric != "micro_f1":
            raise ConfigError("only micro_f1 early stopping is supported")


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    n_layers: int = 2
    n_heads: int = 4
    # False replaces graph-encoded label vectors with raw descriptor encodings
    use_graphormer: bool = True
    # init scale of each layer's output projection, relative to 1/sqrt(hidden);
    # 0 makes the untrained graph encoder an identity map
    graph_out_gain: float = 0.0

    def __post_init__(self):
        if self.graph_out_gain < 0:
            raise ConfigError("graph_out_gain must be non-negative")
        if self.hidden < 1 or self.n_heads < 1 or self.n_layers < 0 or self.hidden % self.n_heads:
            raise ConfigError(f"invalid model dimensions {self}")


# ---------------------------------------------------------------- loss


def _doc_loss(cpos: np.ndarray, mn: float, tau: float, form: str, per_positive: bool):
    """Loss for one document from its positive cosines and mean negative cosine.

    Returns (loss, d loss / d cpos, d loss / d mn).
    """
    cs = cpos if per_positive else np.array([cpos.mean()])
    if form == PRINTED:
        s = np.exp(cs) / tau
        d = np.exp(mn) / tau
        losses = -np.log(s / (s + d))
        w = d / (s + d)
        g = 1.0
    else:
        z = (mn - cs) / tau
        losses = np.logaddexp(0.0, z)
        w = expit(z)
        g = 1.0 / tau
    if per_positive:
        return float(losses.mean()), -g * w / len(cs), float(g * w.sum() / len(cs))
    return float(losses[0]), np.full(len(cpos), -g * w[0] / len(cpos)), float(g * w[0])


def _cos(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity with a zero vector is undefined")
    return float(u @ v / (nu * nv))


def contrastive_loss(doc_vec, pos_vecs, neg_vecs, tau: float = 1.0, form: str = PRINTED,
                     per_positive: bool = False) -> float:
    doc_vec = getattr(doc_vec, "values", doc_vec)
    if len(pos_vecs) == 0:
        raise EmptyPositives("contrastive loss needs at least one positive")
    if len(neg_vecs) == 0:
        raise ValueError("contrastive loss needs at least one negative")
    if not tau > 0:
        raise ConfigError("tau must be > 0")
    cpos = np.array([_cos(doc_vec, p) for p in pos_vecs])
    mn = float(np.mean([_cos(doc_vec, n) for n in neg_vecs]))
    return _doc_loss(cpos, mn, tau, form, per_positive)[0]


# ---------------------------------------------------------------- batches


@dataclass(frozen=True)
class ContrastiveBatch:
    docs: tuple[Document, ...]
    positives: tuple[tuple[str, ...], ...]
    negatives: tuple[tuple[str, ...], ...]
    resampled: int = 0  # documents whose negatives needed replacement


def sample_negatives(batch: Sequence[tuple[Document, frozenset[str]]] | Sequence[Document],
                     seed: int | np.random.Generator) -> ContrastiveBatch:
    items = [(b, b.gold_labels) if isinstance(b, Document) else (b[0], frozenset(b[1])) for b in batch]
    n = len(items)
    if n < 2:
        raise DegenerateBatch("a contrastive batch needs at least two documents")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    negatives = []
    resampled = 0
    for i, (doc, gold) in enumerate(items):
        pool = set()
        for j, (_, other) in enumerate(items):
            if j != i:
                pool |= other
        pool = sorted(pool - gold)
        if not pool:
            raise DegenerateBatch(f"document {doc.id!r} has no eligible negatives in its batch")
        replace = len(pool) < n
        if replace:
            resampled += 1
            log.debug("negative pool for %s has %d labels < %d; sampling with replacement", doc.id, len(pool), n)
        picks = rng.choice(len(pool), size=n, replace=replace)
        negatives.append(tuple(pool[k] for k in picks))
    return ContrastiveBatch(
        docs=tuple(d for d, _ in items),
        positives=tuple(tuple(sorted(g)) for _, g in items),
        negatives=tuple(negatives),
        resampled=resampled,
    )


# ---------------------------------------------------------------- model


@dataclass
class RerankModel:
    encoder: EncoderParams
    graph_params: GraphormerParams
    use_graphormer: bool = True

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"encoder.{k}": v for k, v in self.encoder.arrays().items()}
        if self.use_graphormer:
            out.update({f"graph.{k}": v for k, v in self.graph_params.arrays().items()})
        return out

    def copy(self) -> "RerankModel":
        return RerankModel(self.encoder.copy(), self.graph_params.copy(), self.use_graphormer)


def init_model(seed: int, vocab: Sequence[str], model_cfg: ModelConfig) -> RerankModel:
    enc = init_params(stage_seed(seed, "encoder"), vocab, model_cfg.hidden)
    gp = init_graphormer(stage_seed(seed, "graphormer"), model_cfg.hidden, model_cfg.n_layers, model_cfg.n_heads,
                         out_gain=model_cfg.graph_out_gain)
    return RerankModel(enc, gp, model_cfg.use_graphormer)


def label_embeddings(model: RerankModel, label_tokens: Sequence[Sequence[str]], buckets: np.ndarray):
    enc = MeanPoolEncoder(model.encoder)
    h0, enc_cache = enc.forward(label_tokens)
    if not model.use_graphormer:
        return h0, (enc_cache, None)
    hl, g_cache = graphormer_forward(h0, buckets, model.graph_params)
    return hl, (enc_cache, g_cache)


def _normalize(m: np.ndarray):
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroVector("zero-norm embedding row")
    return m / norms, norms


def _normalize_backward(d_unit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    return (d_unit - unit * (d_unit * unit).sum(axis=1, keepdims=True)) / norms


def loss_and_grads(model: RerankModel, label_ids: Sequence[str], label_tokens: Sequence[Sequence[str]],
                   buckets: np.ndarray, batch: ContrastiveBatch, tau: float = 1.0, form: str = PRINTED,
                   per_positive: bool = False, need_grads: bool = True):
    """Batch-mean contrastive loss and its gradient for every model array."""
    pos = {y: i for i, y in enumerate(label_ids)}
    hl, (lab_cache, g_cache) = label_embeddings(model, label_tokens, buckets)
    enc = MeanPoolEncoder(model.encoder)
    dv, doc_cache = enc.forward([d.tokens for d in batch.docs])

    du, dnorm = _normalize(dv)
    lu, lnorm = _normalize(hl)
    cos = du @ lu.T
    g_cos = np.zeros_like(cos)
    n_docs = len(batch.docs)
    total = 0.0
    for b in range(n_docs):
        try:
            p_idx = np.array([pos[y] for y in batch.positives[b]], dtype=np.int64)
            n_idx = np.array([pos[y] for y in batch.negatives[b]], dtype=np.int64)
        except KeyError as exc:
            raise UnknownLabel(f"label {exc.args[0]!r} has no embedding") from None
        if len(p_idx) == 0:
            raise EmptyPositives(f"document {batch.docs[b].id!r} has no gold labels")
        loss, d_cpos, d_mn = _doc_loss(cos[b, p_idx], float(cos[b, n_idx].mean()), tau, form, per_positive)
        total += loss
        np.add.at(g_cos[b], p_idx, d_cpos / n_docs)
        np.add.at(g_cos[b], n_idx, d_mn / len(n_idx) / n_docs)
    total /= n_docs
    if not need_grads:
        return total, None

    d_dv = _normalize_backward(g_cos @ lu, du, dnorm)
    d_hl = _normalize_backward(g_cos.T @ du, lu, lnorm)
    grads = {f"encoder.{k}": v for k, v in enc.backward(doc_cache, d_dv).items()}
    if model.use_graphormer:
        g_grads, d_h0 = graphormer_backward(g_cache, d_hl, model.graph_params)
        grads.update({f"graph.{k}": v for k, v in g_grads.items()})
    else:
        d_h0 = d_hl
    for k, v in enc.backward(lab_cache, d_h0).items():
        grads[f"encoder.{k}"] += v
    return total, grads


# ---------------------------------------------------------------- optimisation


def lr_at(step: int, total_steps: int, base_lr: float, warmup_ratio: float) -> float:
    """Linear warmup followed by cosine decay to zero."""
    warmup = math.ceil(warmup_ratio * total_steps)
    if step < warmup:
        return base_lr * step / warmup
    progress = (step - warmup) / max(1, total_steps - warmup)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


class _Adam:
    def __init__(self, b1=0.9, b2=0.999, eps=1e-8):
        self.b1, self.b2, self.eps = b1, b2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, arrays, grads, lr, scales=None):
        self.t += 1
        for k, g in grads.items():
            k_lr = lr * (scales.get(k, 1.0) if scales else 1.0)
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1**self.t)
            vhat = v / (1 - self.b2**self.t)
            arrays[k] -= k_lr * mhat / (np.sqrt(vhat) + self.eps)


def _sgd_step(arrays, grads, lr, scales=None):
    for k, g in grads.items():
        arrays[k] -= lr * (scales.get(k, 1.0) if scales else 1.0) * g


_DECAYED = ("embedding", "proj", "wq", "wk", "wv", "wo")


def _decay(arrays, lr, weight_decay, scales=None):
    for k, a in arrays.items():
        if k.rsplit(".", 1)[-1] in _DECAYED:
            a *= 1.0 - lr * (scales.get(k, 1.0) if scales else 1.0) * weight_decay


# ---------------------------------------------------------------- ranking & decisions


@dataclass(frozen=True)
class RankedList:
    doc_id: str
    entries: tuple[tuple[str, float], ...]

    @property
    def labels(self) -> list[str]:
        return [y for y, _ in self.entries]

    def scores(self) -> dict[str, float]:
        return dict(self.entries)


@dataclass(frozen=True)
class DecisionPolicy:
    kind: str = "threshold"  # "threshold" or "top-k"
    value: float = 0.0

    def __post_init__(self):
        if self.kind == "top-k":
            if int(self.value) != self.value or self.value < 1:
                raise InvalidPolicy(f"top-k needs a positive integer k, got {self.value}")
        elif self.kind == "threshold":
            if not np.isfinite(self.value):
                raise InvalidPolicy("threshold must be finite")
        else:
            raise InvalidPolicy(f"unknown policy kind {self.kind!r}")


def rank_by_vector(doc_id: str, doc_vec: np.ndarray, labels: Sequence[str], label_ids: Sequence[str],
                   embeddings: np.ndarray) -> RankedList:
    pos = {y: i for i, y in enumerate(label_ids)}
    missing = [y for y in labels if y not in pos]
    if missing:
        raise UnknownLabel(f"labels without embeddings: {sorted(missing)[:5]}")
    labels = sorted(labels)
    rows = embeddings[[pos[y] for y in labels]] if labels else np.zeros((0, len(doc_vec)))
    dn = np.linalg.norm(doc_vec)
    rn = np.linalg.norm(rows, axis=1)
    denom = dn * rn
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(denom > 0, rows @ doc_vec / np.where(denom > 0, denom, 1.0), 0.0)
    scores = np.clip(scores, -1.0, 1.0)
    order = sorted(range(len(labels)), key=lambda i: (-scores[i], labels[i]))
    return RankedList(doc_id, tuple((labels[i], float(scores[i])) for i in order))


def predict_set(ranked: RankedList, policy: DecisionPolicy) -> set[str]:
    if policy.kind == "top-k":
        return {y for y, _ in ranked.entries[: int(policy.value)]}
    if policy.kind == "threshold":
        return {y for y, s in ranked.entries if s >= policy.value}
    raise InvalidPolicy(f"unknown policy kind {policy.kind!r}")


def calibrate_threshold(ranked: Sequence[RankedList], gold: Mapping[str, frozenset[str]],
                        grid: np.ndarray = THRESHOLD_GRID) -> tuple[float, float]:
    """Grid threshold maximising pooled micro-F1; ties go to the lowest threshold.

    Returns (threshold, micro_f1).
    """
    scores, hits = [], []
    n_gold = 0
    for r in ranked:
        g = gold[r.doc_id]
        n_gold += len(g)
        for y, s in r.entries:
            scores.append(s)
            hits.append(y in g)
    scores = np.asarray(scores)
    hits = np.asarray(hits, dtype=bool)
    best_t, best_f1 = float(grid[0]), -1.0
    for t in grid:
        sel = scores >= t
        tp = int((sel & hits).sum())
        fp = int(sel.sum()) - tp
        fn = n_gold - tp
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t, best_f1


# ---------------------------------------------------------------- checkpoint


@dataclass
class Checkpoint:
    model: RerankModel
    label_ids: tuple[str, ...]
    label_embeddings: np.ndarray
    policy: DecisionPolicy
    seed: int
    fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def hidden(self) -> int:
        return self.model.encoder.hidden

    def doc_vector(self, doc: Document) -> np.ndarray:
        return encode(doc.tokens, self.model.encoder).values

    def to_json(self) -> dict:
        gp = self.model.graph_params
        return {
            "header": {
                "seed": self.seed,
                "h_e": self.hidden,
                "n_layers": gp.n_layers,
                "n_heads": gp.n_heads,
                "use_graphormer": self.model.use_graphormer,
                **self.meta,
            },
            "encoder": self.model.encoder.to_json(),
            "graphormer": gp.to_json(),
            "policy": asdict(self.policy),
            "label_ids": list(self.label_ids),
            "label_embeddings": array_to_json(self.label_embeddings),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Checkpoint":
        hdr = obj["header"]
        meta = {k: v for k, v in hdr.items() if k not in ("seed", "h_e", "n_layers", "n_heads", "use_graphormer")}
        model = RerankModel(
            EncoderParams.from_json(obj["encoder"]),
            GraphormerParams.from_json(obj["graphormer"]),
            bool(hdr["use_graphormer"]),
        )
        return cls(
            model=model,
            label_ids=tuple(obj["label_ids"]),
            label_embeddings=array_from_json(obj["label_embeddings"]),
            policy=DecisionPolicy(**obj["policy"]),
            seed=int(hdr["seed"]),
            fingerprint=obj.get("fingerprint", ""),
            meta=meta,
        )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    write_artifact(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, ckpt.fingerprint, ckpt.to_json())


def load_checkpoint(path, fingerprint: str | None = None) -> Checkpoint:
    return Checkpoint.from_json(read_artifact(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, fingerprint))


def rank_candidates(doc: Document, cands: CandidateSet | None, checkpoint: Checkpoint) -> RankedList:
    """Rank candidate labels by cosine to the document; an empty set means the full vocabulary."""
    labels = cands.labels if cands is not None and cands.labels else checkpoint.label_ids
    return rank_by_vector(doc.id, checkpoint.doc_vector(doc), labels, checkpoint.label_ids,
                          checkpoint.label_embeddings)


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[dict]
    best_epoch: int


def _make_checkpoint(model: RerankModel, label_ids, label_tokens, buckets, seed, policy) -> Checkpoint:
    hl, _ = label_embeddings(model, label_tokens, buckets)
    return Checkpoint(model.copy(), tuple(label_ids), hl, policy, seed)


def _rank_split(ckpt: Checkpoint, docs: Sequence[Document], candidates: Mapping[str, CandidateSet] | None):
    return [rank_candidates(d, candidates.get(d.id) if candidates else None, ckpt) for d in docs]


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    chunks = [order[i:i + size] for i in range(0, n, size)]
    return [c for c in chunks if len(c) >= 2]


def training_loss(model: RerankModel, corpus: Corpus, graph: LabelGraph, config: TrainConfig,
                  seed: int = 0) -> float:
    """Mean loss over the training split with a fixed batching and fixed negatives."""
    docs = corpus.docs("train")
    label_tokens = _label_tokens(corpus, graph)
    buckets = graph.buckets()
    rng = np.random.default_rng(seed)
    losses = []
    for idx in _batches(len(docs), config.batch_size, rng):
        batch = sample_negatives([docs[i] for i in idx], rng)
        loss, _ = loss_and_grads(model, graph.label_ids, label_tokens, buckets, batch, config.tau,
                                 config.loss_form, config.per_positive, need_grads=False)
        losses.append(loss)
    return float(np.mean(losses))


def _label_tokens(corpus: Corpus, graph: LabelGraph) -> list[tuple[str, ...]]:
    by_id = {lab.id: lab.descriptor_tokens for lab in corpus.labels}
    return [by_id[y] for y in graph.label_ids]


def train(corpus: Corpus, graph: LabelGraph, config: TrainConfig | None = None,
          model_cfg: ModelConfig | None = None,
          valid_candidates: Mapping[str, CandidateSet] | None = None) -> TrainResult:
    """Train encoder and graph encoder; keep the epoch with the best validation micro-F1.

    ``valid_candidates`` restricts validation ranking to retrieved candidates;
    without it the full vocabulary is ranked.
    """
    config = config or TrainConfig()
    model_cfg = model_cfg or ModelConfig()
    train_docs = corpus.docs("train")
    valid_docs = corpus.docs("valid")
    label_tokens = _label_tokens(corpus, graph)
    buckets = graph.buckets()

    vocab = build_vocab([d.tokens for d in train_docs] + label_tokens)
    model = init_model(config.seed, vocab, model_cfg)
    arrays = model.arrays()  # views into the model's parameter arrays; updated in place

    shuffle_rng = np.random.default_rng(stage_seed(config.seed, "shuffle"))
    neg_rng = np.random.default_rng(stage_seed(config.seed, "negatives"))
    n_batches = len(range(0, len(train_docs), config.batch_size))
    total_steps = config.epochs * n_batches
    adam = _Adam() if config.optimizer == "adam" else None
    scales = {k: config.graph_lr_scale for k in arrays if k.startswith("graph.")}
    gold = {d.id: d.gold_labels for d in valid_docs}

    def validate(m: RerankModel) -> tuple[float, float]:
        if not valid_docs:
            return float("nan"), 0.0
        ck = _make_checkpoint(m, graph.label_ids, label_tokens, buckets, config.seed, DecisionPolicy())
        t, f1 = calibrate_threshold(_rank_split(ck, valid_docs, valid_candidates), gold)
        return f1, t

    best_f1, best_t = validate(model)
    best_model, best_epoch = model.copy(), 0
    history = [{"epoch": 0, "loss": None, "valid_micro_f1": best_f1, "threshold": best_t, "skipped_batches": 0}]
    stale = 0
    step = 0
    for epoch in range(1, config.epochs + 1):
        losses, skipped = [], 0
        for idx in _batches(len(train_docs), config.batch_size, shuffle_rng):
            lr = lr_at(step, total_steps, config.learning_rate, config.warmup_ratio)
            step += 1
            try:
                batch = sample_negatives([train_docs[i] for i in idx], neg_rng)
            except DegenerateBatch as exc:
                log.warning("epoch %d: skipping batch (%s)", epoch, exc)
                skipped += 1
                continue
            loss, grads = loss_and_grads(model, graph.label_ids, label_tokens, buckets, batch, config.tau,
                                         config.loss_form, config.per_positive)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(f"non-finite loss/gradient at epoch {epoch}, step {step} (loss={loss}, lr={lr})")
            losses.append(loss)
            if lr == 0.0:
                continue
            if config.weight_decay:
                _decay(arrays, lr, config.weight_decay, scales)
            if adam is not None:
                adam.step(arrays, grads, lr, scales)
            else:
                _sgd_step(arrays, grads, lr, scales)
        f1, t = validate(model)
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        history.append({"epoch": epoch, "loss": mean_loss, "valid_micro_f1": f1, "threshold": t,
                        "skipped_batches": skipped})
        log.info("epoch %d loss %.5f valid micro-F1 %.4f", epoch, mean_loss, f1)
        if not valid_docs or f1 > best_f1:
            best_f1, best_t, best_model, best_epoch = f1, t, model.copy(), epoch
            stale = 0
        else:
            stale += 1
            if config.patience is not None and stale >= config.patience:
                log.info("early stop after epoch %d (best epoch %d)", epoch, best_epoch)
                break

    ckpt = _make_checkpoint(best_model, graph.label_ids, label_tokens, buckets, config.seed,
                            DecisionPolicy("threshold", best_t))
    return TrainResult(ckpt, history, best_epoch)
