import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coderank.corpus import LabelDescriptor
from coderank.errors import EmptyTrainingSet, IndexOutOfRange, NoForwardState, NonFiniteActivation, ShapeMismatch
from coderank.label_graph import (
    EDGE,
    NO_EDGE,
    SELF,
    GraphormerParams,
    LabelGraph,
    build_label_graph,
    graphormer_backward,
    graphormer_forward,
    init_graphormer,
    init_node_features,
    spatial_bucket,
)
from coderank.text_encoder import UNK, EncoderParams, MeanPoolEncoder

import oracles
from conftest import make_doc
from gradcheck import numeric_grad, rel_err

IDS = ("A", "B", "C", "D")


def _docs():
    return [make_doc("1", ["t"], ["A", "B"]), make_doc("2", ["t"], ["A", "B", "C"]),
            make_doc("3", ["t"], ["B"]), make_doc("4", ["t"], ["C"])]


def test_cond_prob_and_edges():
    g = build_label_graph(_docs(), IDS, lam=1.0)
    assert g.cond_prob[0, 1] == 1.0  # P(B|A)
    assert g.cond_prob[1, 0] == pytest.approx(2 / 3)
    assert g.cond_prob[2, 0] == 0.5
    assert g.cond_prob[3].sum() == 0.0  # D never seen
    assert g.edges[0, 1] and not g.edges[1, 0]
    assert all(g.edges[i, i] for i in range(3))
    assert ("A", "B") in g.edge_set() and ("B", "A") not in g.edge_set()


def test_threshold_is_inclusive():
    g = build_label_graph(_docs(), IDS, lam=0.5)
    assert g.edges[2, 0] and g.edges[2, 1]


def test_buckets_and_spatial_bucket():
    g = build_label_graph(_docs(), IDS, lam=1.0)
    b = g.buckets()
    assert b[0, 0] == SELF and b[0, 1] == EDGE and b[1, 0] == NO_EDGE
    assert spatial_bucket(g, 2, 2) == "self"
    assert spatial_bucket(g, 0, 1) == "edge"
    assert spatial_bucket(g, 0, 3) == "no-edge"
    with pytest.raises(IndexOutOfRange):
        spatial_bucket(g, 0, 4)


def test_errors():
    with pytest.raises(EmptyTrainingSet):
        build_label_graph([], IDS)
    with pytest.raises(ValueError):
        build_label_graph(_docs(), IDS, lam=0.0)


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1), st.floats(0.01, 1))
def test_lambda_monotone(seed, l1, l2):
    rng = np.random.default_rng(seed)
    docs = [make_doc(str(i), ["t"], rng.choice(IDS, size=int(rng.integers(1, 4)), replace=False)) for i in range(12)]
    hi = build_label_graph(docs, IDS, max(l1, l2)).edge_set()
    lo = build_label_graph(docs, IDS, min(l1, l2)).edge_set()
    assert hi <= lo


@given(st.integers(0, 2**32 - 1))
def test_cond_prob_brute_force(seed):
    rng = np.random.default_rng(seed)
    docs = [make_doc(str(i), ["t"], rng.choice(IDS, size=int(rng.integers(0, 4)), replace=False)) for i in range(15)]
    g = build_label_graph(docs, IDS, 0.7)
    for i, a in enumerate(IDS):
        n_a = sum(a in d.gold_labels for d in docs)
        for j, b in enumerate(IDS):
            n_ab = sum(a in d.gold_labels and b in d.gold_labels for d in docs)
            ref = n_ab / n_a if n_a else 0.0
            assert g.cond_prob[i, j] == ref
            assert g.edges[i, j] == (n_a > 0 and ref >= 0.7)
    again = LabelGraph.from_json(g.to_json())
    assert np.array_equal(again.edges, g.edges) and np.array_equal(again.pair_counts, g.pair_counts)


def test_node_features_toy_encoder():
    vocab = (UNK, "acute", "pain")
    emb = np.array([[0, 0], [0.5, -0.2], [0.1, 0.4]], dtype=float)
    proj = np.array([[1.0, 0.5], [-0.3, 2.0]])
    enc = MeanPoolEncoder(EncoderParams(vocab, emb, proj, np.array([0.1, 0.0])))
    labels = [LabelDescriptor("x", ("acute", "pain")), LabelDescriptor("y", ("acute", "pain")),
              LabelDescriptor("z", ("pain",))]
    f = init_node_features(labels, enc)
    assert f.shape == (3, 2)
    assert np.allclose(f[0], np.tanh(((emb[1] + emb[2]) / 2) @ proj + [0.1, 0.0]), rtol=1e-15, atol=0)
    assert np.array_equal(f[0], f[1])


def _random_params(rng, hidden, n_layers, n_heads, bias=True):
    p = init_graphormer(int(rng.integers(1 << 30)), hidden, n_layers, n_heads)
    for layer in p.layers:
        layer["ln_gain"][:] = rng.normal(1, 0.3, hidden)
        layer["ln_bias"][:] = rng.normal(0, 0.3, hidden)
    if bias:
        p.spatial_bias[:] = rng.normal(size=p.spatial_bias.shape)
    return p


def _random_buckets(rng, n):
    b = rng.integers(1, 3, size=(n, n))
    np.fill_diagonal(b, 0)
    return b


@given(st.integers(0, 2**32 - 1))
def test_zero_bias_single_head_equals_plain_attention(seed):
    rng = np.random.default_rng(seed)
    p = _random_params(rng, 6, 1, 1, bias=False)
    h = rng.normal(size=(5, 6))
    out, _ = graphormer_forward(h, _random_buckets(rng, 5), p)
    L = p.layers[0]
    ref = oracles.residual_attention(h, L["wq"], L["wk"], L["wv"], L["wo"], L["ln_gain"], L["ln_bias"])
    assert np.max(np.abs(out - ref)) < 1e-9


@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 1), (2, 1), (2, 2), (1, 4)]))
def test_matches_loop_reference_with_bias(seed, shape):
    n_layers, n_heads = shape
    rng = np.random.default_rng(seed)
    p = _random_params(rng, 8, n_layers, n_heads)
    h = rng.normal(size=(3, 8))
    b = _random_buckets(rng, 3)
    out, _ = graphormer_forward(h, b, p)
    ref = oracles.graph_encoder(h, p.layers, p.spatial_bias, b, n_heads)
    assert np.max(np.abs(out - ref)) < 1e-9


def test_head_scale_uses_head_dim():
    # a single head attending with sqrt(hidden) instead would disagree with the reference
    rng = np.random.default_rng(0)
    p = _random_params(rng, 8, 1, 4)
    p.layers[0]["wq"] *= 4
    h = rng.normal(size=(4, 8))
    b = _random_buckets(rng, 4)
    out, _ = graphormer_forward(h, b, p)
    assert np.max(np.abs(out - oracles.graph_encoder(h, p.layers, p.spatial_bias, b, 4))) < 1e-9


@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_bias_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    p = _random_params(rng, 4, 2, 2)
    h = rng.normal(size=(4, 4))
    b = _random_buckets(rng, 4)
    _, c1 = graphormer_forward(h, b, p)
    p.spatial_bias[1] += c
    _, c2 = graphormer_forward(h, b, p)
    for l1, l2 in zip(c1.layers, c2.layers):
        assert np.allclose(l1.attn, l2.attn, rtol=0, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    docs = [make_doc(str(i), ["t"], rng.choice(IDS, size=int(rng.integers(1, 4)), replace=False)) for i in range(10)]
    g = build_label_graph(docs, IDS, 0.6)
    p = _random_params(rng, 8, 2, 2)
    h = rng.normal(size=(4, 8))
    perm = rng.permutation(4)
    out, _ = graphormer_forward(h, g, p)
    out_p, _ = graphormer_forward(h[perm], g.permuted(perm), p)
    assert np.array_equal(out_p, out[perm])
    w = rng.normal(size=(4, 8))
    g1, d1 = graphormer_backward(graphormer_forward(h, g, p)[1], w, p)
    g2, d2 = graphormer_backward(graphormer_forward(h[perm], g.permuted(perm), p)[1], w[perm], p)
    assert np.array_equal(d2, d1[perm])
    assert all(np.array_equal(g1[k], g2[k]) for k in g1)


def test_graph_and_bucket_inputs_agree():
    g = build_label_graph(_docs(), ("D", "B", "A", "C"), 0.5)
    p = _random_params(np.random.default_rng(3), 4, 2, 2)
    h = np.random.default_rng(4).normal(size=(4, 4))
    a, _ = graphormer_forward(h, g, p)
    b, _ = graphormer_forward(h, g.buckets(), p)
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_zero_layers():
    p = init_graphormer(0, 4, 0, 2)
    h = np.ones((3, 4))
    out, cache = graphormer_forward(h, np.zeros((3, 3), dtype=int), p)
    assert np.array_equal(out, h)
    grads, dx = graphormer_backward(cache, h, p)
    assert np.array_equal(dx, h) and not grads["spatial_bias"].any()


def test_finite_for_extreme_inputs():
    p = init_graphormer(0, 4, 2, 2)
    out, _ = graphormer_forward(np.full((3, 4), 1e150), _random_buckets(np.random.default_rng(0), 3), p)
    assert np.all(np.isfinite(out))
    out, _ = graphormer_forward(np.zeros((3, 4)), np.zeros((3, 3), dtype=int), p)
    assert np.all(np.isfinite(out))


def test_non_finite_raises():
    p = init_graphormer(0, 4, 1, 1)
    h = np.random.default_rng(0).normal(size=(3, 4))
    h[1, 2] = np.nan
    with np.errstate(invalid="ignore"), pytest.raises(NonFiniteActivation):
        graphormer_forward(h, np.zeros((3, 3), dtype=int), p)


def test_shape_errors():
    p = init_graphormer(0, 4, 1, 2)
    with pytest.raises(ShapeMismatch):
        graphormer_forward(np.zeros((3, 5)), np.zeros((3, 3), dtype=int), p)
    with pytest.raises(ShapeMismatch):
        graphormer_forward(np.zeros((2, 4)), np.zeros((3, 3), dtype=int), p)
    with pytest.raises(ShapeMismatch):
        init_graphormer(0, 6, 1, 4)
    with pytest.raises(NoForwardState):
        graphormer_backward(None, np.zeros((3, 4)), p)


def test_out_gain_zero_is_identity():
    p = init_graphormer(0, 8, 2, 2, out_gain=0.0)
    h = np.random.default_rng(1).normal(size=(5, 8))
    out, _ = graphormer_forward(h, _random_buckets(np.random.default_rng(2), 5), p)
    assert np.array_equal(out, h)


@pytest.mark.parametrize("seed", range(3))
def test_backward_finite_difference(seed):
    rng = np.random.default_rng(seed)
    p = _random_params(rng, 4, 2, 2)
    h = rng.normal(size=(3, 4))
    b = _random_buckets(rng, 3)
    w = rng.normal(size=(3, 4))
    out, cache = graphormer_forward(h, b, p)
    grads, dx = graphormer_backward(cache, w, p)
    loss = lambda: float((graphormer_forward(h, b, p)[0] * w).sum())
    for k, a in p.arrays().items():
        assert rel_err(grads[k], numeric_grad(loss, a)) < 1e-3, k
    assert rel_err(dx, numeric_grad(loss, h)) < 1e-3


def test_backward_zero_upstream():
    rng = np.random.default_rng(0)
    p = _random_params(rng, 4, 2, 2)
    _, cache = graphormer_forward(rng.normal(size=(3, 4)), _random_buckets(rng, 3), p)
    grads, dx = graphormer_backward(cache, np.zeros((3, 4)), p)
    assert not dx.any() and all(not g.any() for g in grads.values())


def test_masked_node_gets_zero_gradient():
    rng = np.random.default_rng(4)
    p = _random_params(rng, 4, 2, 1)
    p.spatial_bias[0, NO_EDGE] = -1e6  # nobody attends across a missing edge
    b = np.full((3, 3), NO_EDGE)
    np.fill_diagonal(b, SELF)
    b[0, 1] = b[1, 0] = EDGE  # node 2 is isolated
    h = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 4))
    w[2] = 0.0  # loss ignores node 2's own output
    _, cache = graphormer_forward(h, b, p)
    _, dx = graphormer_backward(cache, w, p)
    assert not dx[2].any()
    assert dx[:2].any()


def test_params_round_trip():
    p = _random_params(np.random.default_rng(0), 4, 2, 2)
    q = GraphormerParams.from_json(p.to_json())
    assert all(np.array_equal(p.arrays()[k], q.arrays()[k]) for k in p.arrays())


def test_backward_finite_difference_graph_input():
    rng = np.random.default_rng(9)
    g = build_label_graph(_docs(), ("D", "B", "A", "C"), 0.5)
    p = _random_params(rng, 4, 2, 2)
    h = rng.normal(size=(4, 4))
    w = rng.normal(size=(4, 4))
    grads, dx = graphormer_backward(graphormer_forward(h, g, p)[1], w, p)
    loss = lambda: float((graphormer_forward(h, g, p)[0] * w).sum())
    for k, a in p.arrays().items():
        assert rel_err(grads[k], numeric_grad(loss, a)) < 1e-3, k
    assert rel_err(dx, numeric_grad(loss, h)) < 1e-3
