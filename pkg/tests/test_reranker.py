import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coderank.corpus import Corpus, LabelDescriptor, Split
from coderank.errors import (
    ConfigError,
    DegenerateBatch,
    EmptyPositives,
    FingerprintMismatch,
    InvalidPolicy,
    UnknownLabel,
    ZeroVector,
)
from coderank.label_graph import build_label_graph
from coderank.reranker import (
    CONVENTIONAL,
    PRINTED,
    THRESHOLD_GRID,
    DecisionPolicy,
    ModelConfig,
    RankedList,
    TrainConfig,
    calibrate_threshold,
    contrastive_loss,
    init_model,
    load_checkpoint,
    loss_and_grads,
    lr_at,
    predict_set,
    rank_by_vector,
    sample_negatives,
    save_checkpoint,
    train,
    training_loss,
)
from coderank.text_encoder import build_vocab

import oracles
from conftest import make_doc
from gradcheck import numeric_grad, rel_err

FORMS = [(PRINTED, False), (PRINTED, True), (CONVENTIONAL, False), (CONVENTIONAL, True)]


def _unit(angle):
    return np.array([math.cos(angle), math.sin(angle)])


# ---------------------------------------------------------------- loss


@pytest.mark.parametrize("form,per", FORMS)
def test_symmetric_loss_is_ln2(form, per):
    d = np.array([1.0, 0.0])
    v = _unit(0.7)
    w = np.array([v[0], -v[1]])  # same cosine to d
    assert abs(contrastive_loss(d, [v], [w], 0.3, form, per) - math.log(2)) <= 1e-12


@pytest.mark.parametrize("form,per", FORMS)
def test_opposite_vectors(form, per):
    d = np.array([1.0, 0.0, 0.0])
    got = contrastive_loss(d, [d * 2], [-d], 1.0, form, per)
    assert abs(got - math.log(1 + math.exp(-2))) <= 1e-9


@given(st.floats(0.01, 100), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_printed_form_ignores_tau(tau, a, b):
    d = np.array([1.0, 0.0])
    ref = contrastive_loss(d, [_unit(a)], [_unit(b)], 1.0, PRINTED)
    assert contrastive_loss(d, [_unit(a)], [_unit(b)], tau, PRINTED) == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_conventional_form_depends_on_tau():
    d = np.array([1.0, 0.0])
    l1 = contrastive_loss(d, [_unit(0.3)], [_unit(1.5)], 1.0, CONVENTIONAL)
    l2 = contrastive_loss(d, [_unit(0.3)], [_unit(1.5)], 0.1, CONVENTIONAL)
    assert l2 < l1


@pytest.mark.parametrize("form,per", FORMS)
def test_loss_monotone_in_cosines(form, per):
    d = np.array([1.0, 0.0])
    neg = [_unit(1.0)]
    pos = [contrastive_loss(d, [_unit(a)], neg, 0.5, form, per) for a in np.linspace(0, 3, 13)]
    assert all(x < y for x, y in zip(pos, pos[1:]))
    negs = [contrastive_loss(d, [_unit(1.0)], [_unit(a)], 0.5, form, per) for a in np.linspace(0, 3, 13)]
    assert all(x > y for x, y in zip(negs, negs[1:]))


def test_loss_errors():
    d = np.array([1.0, 0.0])
    with pytest.raises(ZeroVector):
        contrastive_loss(np.zeros(2), [d], [d])
    with pytest.raises(ZeroVector):
        contrastive_loss(d, [np.zeros(2)], [d])
    with pytest.raises(EmptyPositives):
        contrastive_loss(d, [], [d])
    with pytest.raises(ConfigError):
        contrastive_loss(d, [d], [d], tau=0.0)


# ---------------------------------------------------------------- negatives


def _batch_docs():
    return [make_doc("a", ["x"], ["L1", "L2"]), make_doc("b", ["y"], ["L2", "L3"]),
            make_doc("c", ["z"], ["L4"])]


def test_negatives_come_from_other_golds():
    batch = sample_negatives(_batch_docs(), 0)
    golds = [d.gold_labels for d in _batch_docs()]
    for i, negs in enumerate(batch.negatives):
        assert len(negs) == 3
        others = set().union(*(g for j, g in enumerate(golds) if j != i))
        assert set(negs) <= others - golds[i]
    assert batch.positives == (("L1", "L2"), ("L2", "L3"), ("L4",))


def test_negatives_deterministic():
    assert sample_negatives(_batch_docs(), 5) == sample_negatives(_batch_docs(), 5)


def test_small_pool_resamples():
    # doc a's pool is {L3, L4}: fewer labels than the batch, so drawn with replacement
    assert sample_negatives(_batch_docs(), 0).resampled >= 1


def test_degenerate_batches():
    with pytest.raises(DegenerateBatch):
        sample_negatives(_batch_docs()[:1], 0)
    same = [make_doc("a", ["x"], ["L1"]), make_doc("b", ["x"], ["L1"])]
    with pytest.raises(DegenerateBatch):
        sample_negatives(same, 0)


@given(st.integers(0, 2**32 - 1))
def test_negatives_never_gold(seed):
    rng = np.random.default_rng(seed)
    labels = [f"L{i}" for i in range(8)]
    docs = [make_doc(str(i), ["w"], rng.choice(labels, size=int(rng.integers(1, 4)), replace=False))
            for i in range(5)]
    try:
        batch = sample_negatives(docs, seed)
    except DegenerateBatch:
        return
    for d, negs in zip(docs, batch.negatives):
        assert not set(negs) & d.gold_labels


# ---------------------------------------------------------------- gradients


def _toy(seed=0, n_docs=3, hidden=4):
    rng = np.random.default_rng(seed)
    words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta"]
    ids = [f"L{i}" for i in range(6)]
    label_tokens = [tuple(rng.choice(words, size=2)) for _ in ids]
    docs = [make_doc(f"d{i}", list(rng.choice(words, size=4)), [ids[i], ids[(i + 1) % 6]]) for i in range(n_docs)]
    graph = build_label_graph(docs, ids, 0.5)
    model = init_model(seed, build_vocab([d.tokens for d in docs] + label_tokens),
                       ModelConfig(hidden=hidden, n_layers=2, n_heads=2, graph_out_gain=1.0))
    model.graph_params.spatial_bias[:] = rng.normal(size=model.graph_params.spatial_bias.shape)
    return docs, ids, label_tokens, graph, model


@pytest.mark.parametrize("form,per", FORMS)
@pytest.mark.parametrize("use_graph", [True, False])
def test_end_to_end_gradients(form, per, use_graph):
    docs, ids, label_tokens, graph, model = _toy()
    model.use_graphormer = use_graph
    batch = sample_negatives(docs, 1)
    buckets = graph.buckets()
    _, grads = loss_and_grads(model, ids, label_tokens, buckets, batch, 0.5, form, per)
    f = lambda: loss_and_grads(model, ids, label_tokens, buckets, batch, 0.5, form, per, need_grads=False)[0]
    assert set(grads) == set(model.arrays())
    for k, a in model.arrays().items():
        assert rel_err(grads[k], numeric_grad(f, a)) < 1e-3, k


def test_unknown_label_in_batch():
    docs, ids, label_tokens, graph, model = _toy()
    batch = sample_negatives(docs, 1)
    with pytest.raises(UnknownLabel):
        loss_and_grads(model, ids[1:], label_tokens[1:], graph.buckets()[1:, 1:], batch)


# ---------------------------------------------------------------- training


def _toy_corpus(n_docs=4, valid=()):
    docs, ids, label_tokens, _, _ = _toy(n_docs=n_docs)
    labels = tuple(LabelDescriptor(y, t) for y, t in zip(ids, label_tokens))
    train_ids = tuple(d.id for d in docs if d.id not in valid)
    corpus = Corpus(tuple(docs), labels, Split(train=train_ids, valid=tuple(valid)))
    return corpus, build_label_graph(corpus.docs("train"), ids, 0.5)


def _init_for(corpus, cfg, mcfg):
    toks = [lab.descriptor_tokens for lab in corpus.labels]
    return init_model(cfg.seed, build_vocab([d.tokens for d in corpus.docs("train")] + toks), mcfg)


def test_one_epoch_lowers_loss():
    corpus, graph = _toy_corpus()
    mcfg = ModelConfig(hidden=8, n_heads=2)
    cfg = TrainConfig(epochs=1, batch_size=4, learning_rate=0.05, optimizer="adam", warmup_ratio=0.0,
                      loss_form=CONVENTIONAL, tau=0.5)
    before = training_loss(_init_for(corpus, cfg, mcfg), corpus, graph, cfg)
    res = train(corpus, graph, cfg, mcfg)
    assert training_loss(res.checkpoint.model, corpus, graph, cfg) < before


@pytest.mark.parametrize("cfg", [TrainConfig(epochs=2, batch_size=2, learning_rate=0.0),
                                 TrainConfig(epochs=0, batch_size=2, learning_rate=1.0)])
def test_no_update_keeps_initialisation(cfg):
    corpus, graph = _toy_corpus()
    mcfg = ModelConfig(hidden=8, n_heads=2)
    init = _init_for(corpus, cfg, mcfg).arrays()
    got = train(corpus, graph, cfg, mcfg).checkpoint.model.arrays()
    assert set(init) == set(got)
    assert all(np.array_equal(init[k], got[k]) for k in init)


def test_graph_lr_scale_zero_freezes_graph():
    corpus, graph = _toy_corpus()
    mcfg = ModelConfig(hidden=8, n_heads=2, graph_out_gain=1.0)
    cfg = TrainConfig(epochs=2, batch_size=2, learning_rate=0.05, optimizer="adam", graph_lr_scale=0.0)
    init = _init_for(corpus, cfg, mcfg).arrays()
    got = train(corpus, graph, cfg, mcfg).checkpoint.model.arrays()
    for k in init:
        assert np.array_equal(init[k], got[k]) == k.startswith("graph."), k


def test_train_is_deterministic():
    corpus, graph = _toy_corpus(n_docs=6, valid=("d5",))
    cfg = TrainConfig(epochs=2, batch_size=2, learning_rate=0.01, optimizer="adam")
    mcfg = ModelConfig(hidden=8, n_heads=2)
    a, b = train(corpus, graph, cfg, mcfg), train(corpus, graph, cfg, mcfg)
    assert a.checkpoint.to_json() == b.checkpoint.to_json() and a.history == b.history


def test_lr_schedule():
    assert lr_at(0, 100, 1.0, 0.1) == 0.0
    assert lr_at(5, 100, 1.0, 0.1) == pytest.approx(0.5)
    assert lr_at(10, 100, 1.0, 0.1) == pytest.approx(1.0)
    after = [lr_at(s, 100, 1.0, 0.1) for s in range(10, 101)]
    assert all(x >= y for x, y in zip(after, after[1:]))
    assert after[-1] == pytest.approx(0.0, abs=1e-15)
    assert lr_at(0, 10, 2.0, 0.0) == 2.0


@pytest.mark.parametrize("kw", [{"tau": 0}, {"batch_size": 1}, {"learning_rate": -1}, {"epochs": -1},
                                {"optimizer": "rmsprop"}, {"loss_form": "x"}, {"warmup_ratio": 2},
                                {"graph_lr_scale": -0.1}])
def test_train_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_model_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(hidden=6, n_heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(graph_out_gain=-1)


# ---------------------------------------------------------------- ranking and decisions


def test_rank_hand_cosines():
    emb = np.array([_unit(math.acos(c)) for c in (0.1, 0.9, -0.5)])
    r = rank_by_vector("d", np.array([1.0, 0.0]), ["A", "B", "C"], ["A", "B", "C"], emb)
    assert r.labels == ["B", "A", "C"]
    assert [s for _, s in r.entries] == pytest.approx([0.9, 0.1, -0.5], abs=1e-12)


def test_rank_singleton_and_ties():
    emb = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 1.0]])
    assert rank_by_vector("d", np.array([1.0, 0.0]), ["Z"], ["Z"], emb[:1]).labels == ["Z"]
    r = rank_by_vector("d", np.array([1.0, 0.0]), ["Q", "P", "R"], ["Q", "P", "R"], emb)
    assert r.labels == ["P", "Q", "R"]
    with pytest.raises(UnknownLabel):
        rank_by_vector("d", np.array([1.0, 0.0]), ["X"], ["Q"], emb[:1])


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_rank_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(6, 3))
    v = rng.normal(size=3)
    ids = list("abcdef")
    r1 = rank_by_vector("d", v, ids, ids, emb)
    r2 = rank_by_vector("d", v * c, ids, ids, emb * c)
    assert r1.labels == r2.labels
    assert np.allclose([s for _, s in r1.entries], [s for _, s in r2.entries], atol=1e-12)


def test_predict_set():
    r = RankedList("d", tuple((f"L{i:02d}", 1 - i / 20) for i in range(20)))
    assert predict_set(r, DecisionPolicy("top-k", 8)) == {f"L{i:02d}" for i in range(8)}
    assert predict_set(r, DecisionPolicy("threshold", 1.1)) == set()
    assert predict_set(r, DecisionPolicy("threshold", 0.9)) == {"L00", "L01", "L02"}
    for bad in [("top-k", 0), ("top-k", 2.5), ("threshold", float("inf")), ("median", 1)]:
        with pytest.raises(InvalidPolicy):
            DecisionPolicy(*bad)


@given(st.integers(0, 2**32 - 1))
def test_calibrate_threshold_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    labels = [f"L{i}" for i in range(6)]
    ranked, gold = [], {}
    for d in range(5):
        cand = rng.choice(labels, size=int(rng.integers(1, 6)), replace=False)
        entries = sorted(((y, float(np.round(rng.uniform(-1, 1), 2))) for y in cand), key=lambda e: -e[1])
        ranked.append(RankedList(f"d{d}", tuple(entries)))
        gold[f"d{d}"] = frozenset(rng.choice(labels, size=int(rng.integers(1, 3)), replace=False))
    best_t, best = None, -1.0
    for t in THRESHOLD_GRID:
        pred = {r.doc_id: {y for y, s in r.entries if s >= t} for r in ranked}
        micro = oracles.f1(gold, pred, labels)[1]
        if micro > best + 1e-12:
            best_t, best = t, micro
    t, f1 = calibrate_threshold(ranked, gold)
    assert f1 == pytest.approx(best, abs=1e-12)
    assert t == best_t


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip(tmp_path):
    corpus, graph = _toy_corpus(n_docs=6, valid=("d5",))
    ck = train(corpus, graph, TrainConfig(epochs=1, batch_size=2, learning_rate=0.01),
               ModelConfig(hidden=8, n_heads=2)).checkpoint
    ck.fingerprint = "abc"
    save_checkpoint(ck, tmp_path / "ck.json")
    back = load_checkpoint(tmp_path / "ck.json", "abc")
    assert back.to_json() == ck.to_json()
    assert np.array_equal(back.label_embeddings, ck.label_embeddings)
    with pytest.raises(FingerprintMismatch):
        load_checkpoint(tmp_path / "ck.json", "other")
