import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pkbp.graph import PropertyGraph
from pkbp.linkpred import (
    MODEL_KINDS,
    PREDICTED_RELATION,
    Hyperparams,
    NodeFeatures,
    TrainingError,
    _GCN,
    _PGNN,
    _loss_and_grad_logits,
    anchor_sets,
    augment_with_predictions,
    barbell,
    bfs_distances,
    constant_features,
    evaluate_split,
    node_features,
    roc_auc,
    score_pairs,
    split_edges,
    train_link_model,
)
from pkbp.numcore import InvalidArgument


def random_graph(n=60, p=0.1, seed=0):
    gen = np.random.default_rng(seed)
    return PropertyGraph.from_pairs(n, [(i, j) for i in range(n) for j in range(i + 1, n) if gen.random() < p])


# ---- splitting and features ----------------------------------------------

def test_split_sizes_and_determinism():
    g = PropertyGraph.from_pairs(8, [(i, i + 1) for i in range(7)] + [(0, 7), (0, 4), (2, 6)])
    sp = split_edges(g, 0.2, seed=4)
    assert (len(sp.train_pos), len(sp.test_pos)) == (8, 2)
    assert (len(sp.train_neg), len(sp.test_neg)) == (8, 2)
    assert not set(sp.train_pos) & set(sp.test_pos)
    assert not set(sp.train_neg + sp.test_neg) & g.linked_pairs()
    assert len(set(sp.train_neg + sp.test_neg)) == 10
    assert split_edges(g, 0.2, seed=4) == sp


def test_split_errors():
    with pytest.raises(InvalidArgument):
        split_edges(PropertyGraph.from_pairs(5, itertools.combinations(range(5), 2)), 0.2, 0)
    with pytest.raises(InvalidArgument):
        split_edges(PropertyGraph.from_pairs(3, [(0, 1)]), 0.2, 0)
    with pytest.raises(InvalidArgument):
        split_edges(random_graph(), 1.0, 0)


def test_node_features_top_values():
    g = PropertyGraph.from_pairs(3, [(0, 1)])
    g.add_attribute(0, "religion", "Hindu")
    g.add_attribute(1, "religion", "Hindu")
    g.add_attribute(2, "residence", "Oslo")
    F = node_features(g, top=1)
    assert F.matrix.tolist() == [[1, 1], [1, 1], [0, 1]]


def test_bfs_and_anchor_sets():
    A = np.zeros((4, 4))
    A[0, 1] = A[1, 0] = A[1, 2] = A[2, 1] = 1
    D = bfs_distances(A)
    assert D[0, 2] == 2 and np.isinf(D[0, 3])
    sets = anchor_sets(20, seed=1)
    assert len(sets) == 19  # ceil(log2(20)^2)
    assert [len(s) for s in sets[:5]] == [10, 5, 2, 1, 1]
    assert all(len(set(s)) == len(s) for s in sets)


# ---- gradients ---------------------------------------------------------------

@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_manual_gradients_match_finite_differences(kind):
    g = random_graph(12, 0.3, seed=2)
    sp = split_edges(g, 0.3, seed=0)
    X = np.random.default_rng(1).random((12, 3))
    hp = Hyperparams(hidden=4, out_dim=3)
    gen = np.random.default_rng(0)
    net = _GCN(X, sp.train_pos, hp, gen) if kind == "GCN" else _PGNN(X, sp.train_pos, hp, gen, anchor_sets(12, 0))
    net.params["b"] = np.array([0.3])
    pairs = sp.train_pos + sp.train_neg
    u = np.array([a for a, _ in pairs])
    v = np.array([b for _, b in pairs])
    y = np.array([1.0] * len(sp.train_pos) + [0.0] * len(sp.train_neg))

    def loss(params):
        Z, _ = net.forward(params)
        return _loss_and_grad_logits(np.einsum("ij,ij->i", Z[u], Z[v]) + params["b"][0], y)[0]

    Z, cache = net.forward(net.params)
    _, dlogit = _loss_and_grad_logits(np.einsum("ij,ij->i", Z[u], Z[v]) + net.params["b"][0], y)
    dZ = np.zeros_like(Z)
    np.add.at(dZ, u, dlogit[:, None] * Z[v])
    np.add.at(dZ, v, dlogit[:, None] * Z[u])
    grads = net.backward(net.params, cache, dZ)
    grads["b"] = np.array([dlogit.sum()])
    h = 1e-6
    for name, P in net.params.items():
        for idx in list(np.ndindex(P.shape))[:12]:
            plus = {k: p.copy() for k, p in net.params.items()}
            minus = {k: p.copy() for k, p in net.params.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            numeric = (loss(plus) - loss(minus)) / (2 * h)
            assert grads[name][idx] == pytest.approx(numeric, abs=1e-6), (name, idx)


# ---- training -------------------------------------------------------------------

@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_untrained_model_is_a_random_ranker(kind):
    g = random_graph()
    sp = split_edges(g, 100 / len(g.linked_pairs()), seed=1)
    assert len(sp.test_pos) + len(sp.test_neg) == 200
    m = train_link_model(kind, g, sp, constant_features(60), Hyperparams(epochs=0, seed=3))
    assert 0.35 <= evaluate_split(m, g, sp) <= 0.65


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_training_reduces_loss_and_is_deterministic(kind):
    g = barbell()
    sp = split_edges(g, 0.2, seed=1)
    F = constant_features(len(g.nodes))
    m1 = train_link_model(kind, g, sp, F, Hyperparams(seed=1))
    m2 = train_link_model(kind, g, sp, F, Hyperparams(seed=1))
    assert m1.losses[-1] <= m1.losses[0]
    assert len(m1.losses) == 201
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])
    if kind == "PGNN":
        assert m1.anchor_sets


def test_barbell_pgnn_beats_gcn_seed_1():
    g = barbell()
    sp = split_edges(g, 0.2, seed=1)
    F = constant_features(len(g.nodes))
    auc = {k: evaluate_split(train_link_model(k, g, sp, F, Hyperparams(seed=1)), g, sp) for k in MODEL_KINDS}
    assert auc["PGNN"] > auc["GCN"]


def test_non_finite_loss_names_the_epoch():
    g = barbell()
    sp = split_edges(g, 0.2, seed=0)
    huge = NodeFeatures(np.full((len(g.nodes), 1), 1e200), "constant")
    with pytest.raises(TrainingError) as err:
        train_link_model("GCN", g, sp, huge)
    assert err.value.epoch == 0


def test_bad_kind_and_feature_rows():
    g = barbell()
    sp = split_edges(g, 0.2, seed=0)
    with pytest.raises(InvalidArgument):
        train_link_model("MLP", g, sp, constant_features(23))
    with pytest.raises(InvalidArgument):
        train_link_model("GCN", g, sp, constant_features(5))


# ---- scoring ------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained():
    g = barbell()
    sp = split_edges(g, 0.2, seed=2)
    return g, train_link_model("PGNN", g, sp, constant_features(len(g.nodes)), Hyperparams(seed=2))


def test_score_pairs_contract(trained):
    g, m = trained
    s = score_pairs(m, [(0, 1), (1, 0), (3, 15)])
    assert np.all((s > 0) & (s < 1))
    assert s[0] == s[1]
    with pytest.raises(InvalidArgument):
        score_pairs(m, [(2, 2)])
    with pytest.raises(InvalidArgument):
        score_pairs(m, [(0, 99)])


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def test_roc_auc_examples():
    assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert roc_auc([0.5, 0.5], [1, 0]) == 0.5
    with pytest.raises(InvalidArgument):
        roc_auc([0.1, 0.2], [1, 1])


def test_roc_auc_matches_pair_counting_oracle():
    gen = np.random.default_rng(9)
    for _ in range(50):
        scores = gen.integers(0, 10, 50) / 10  # plenty of ties
        labels = gen.integers(0, 2, 50)
        if labels.min() == labels.max():
            continue
        assert roc_auc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(0, 1)), min_size=2, max_size=40))
def test_roc_auc_monotone_invariance(data):
    scores = np.array([s / 10 for s, _ in data])
    labels = np.array([l for _, l in data])
    if labels.min() == labels.max():
        return
    assert roc_auc(np.exp(scores) * 3 + 1, labels) == pytest.approx(roc_auc(scores, labels), abs=1e-12)


# ---- augmentation -----------------------------------------------------------------

def test_augment_thresholds(trained):
    g, m = trained
    assert len(augment_with_predictions(g, m, 1.0).edges) == len(g.edges)
    with pytest.raises(InvalidArgument):
        augment_with_predictions(g, m, 0)
    loose = augment_with_predictions(g, m, 0.5)
    tight = augment_with_predictions(g, m, 0.8)
    added = lambda h: set(h.edges) - set(g.edges)
    assert added(tight) <= added(loose)
    for key, e in g.edges.items():
        assert loose.edges[key] == e


def test_augment_adds_exactly_the_top_non_edge(trained):
    g, m = trained
    linked = g.linked_pairs()
    cand = [(i, j) for i in range(len(g.nodes)) for j in range(i + 1, len(g.nodes)) if (i, j) not in linked]
    scores = score_pairs(m, cand)
    order = np.argsort(-scores)
    threshold = (scores[order[0]] + scores[order[1]]) / 2
    new = set(augment_with_predictions(g, m, threshold).edges) - set(g.edges)
    u, v = cand[order[0]]
    assert new == {(u, v, PREDICTED_RELATION)}
    e = augment_with_predictions(g, m, threshold).edges[(u, v, PREDICTED_RELATION)]
    assert e.provenance == "predicted" and e.score == pytest.approx(scores[order[0]])
