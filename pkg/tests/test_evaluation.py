import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedforest.data import make_blobs, partition_alpha_chunking, partition_iid, stratified_split
from fedforest.evaluation import (
    EvalReport,
    argmax_random_ties,
    class_frequencies,
    evaluate,
    mean_report,
    node_stats,
    predict_ensemble,
    predict_label_lists,
)
from fedforest.federation import FederationConfig, shards_from_plan, train
from fedforest.tree import DecisionTree, GrowthParams, grow

from oracles import count_nodes


def leaf_tree(labels):
    t = DecisionTree()
    t.add_leaf(0)
    t.label_lists[0] = list(labels)
    return t


class Bag:
    def __init__(self, trees, c):
        self.trees, self.n_classes = trees, c

    def predict(self, X, seed=0):
        return predict_label_lists(self.trees, X, self.n_classes, seed)


def test_single_leaf_single_label():
    assert predict_ensemble(Bag([leaf_tree([1])], 3), [0.0]) == 1


def test_all_empty_is_seeded_uniform():
    bag = Bag([leaf_tree([]), leaf_tree([])], 3)
    X = np.zeros((600, 1))
    a, b = bag.predict(X, 5), bag.predict(X, 5)
    assert np.array_equal(a, b)
    counts = np.bincount(a, minlength=3)
    assert (counts > 150).all()  # each ~200


def test_tie_break_is_row_local():
    scores = np.array([[2, 2, 0]] * 50)
    full = argmax_random_ties(scores, 3)
    assert set(full.tolist()) == {0, 1}
    # same rows evaluated in two batches
    head = argmax_random_ties(scores[:20], 3)
    tail = argmax_random_ties(scores[20:], 3, row_offset=20)
    assert np.array_equal(np.concatenate([head, tail]), full)


def test_no_tie_is_plain_argmax():
    assert argmax_random_ties(np.array([[0, 3, 1], [5, 0, 0]]), 0).tolist() == [1, 0]


def _random_model(seed):
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(int(rng.integers(1, 6))):
        X = rng.normal(size=(40, 3))
        t = grow(DecisionTree(), X, rng.integers(0, 3, 40), GrowthParams(), rng)
        for leaf in t.leaves():
            t.label_lists[leaf] = rng.integers(0, 3, size=int(rng.integers(0, 4))).tolist()
        trees.append(t)
    return trees, rng.normal(size=(25, 3))


@given(seed=st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_vote_conservation(seed):
    trees, X = _random_model(seed)
    F = class_frequencies(trees, X, 3)
    expected = [sum(len(t.label_lists[t.route(x)]) for t in trees) for x in X]
    assert F.sum(axis=1).tolist() == expected


@given(seed=st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_prediction_permutation_invariant(seed):
    trees, X = _random_model(seed)
    base = predict_label_lists(trees, X, 3, seed=1)
    rng = np.random.default_rng(seed)
    shuffled = [trees[i] for i in rng.permutation(len(trees))]
    for t in shuffled:
        for leaf in t.label_lists:
            t.label_lists[leaf] = list(rng.permutation(t.label_lists[leaf]))
    assert np.array_equal(predict_label_lists(shuffled, X, 3, seed=1), base)


def test_node_stats_examples():
    assert node_stats([leaf_tree([]), leaf_tree([0])]) == (1.0, 1.0, 0.0)
    t = DecisionTree()
    t.add_leaf(0)
    t.split_leaf(0, 0, 0.0)
    assert node_stats([t]) == (3.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        node_stats([])


@given(seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_node_stats_matches_independent_counter(seed):
    trees, _ = _random_model(seed)
    want = np.mean([count_nodes(t) for t in trees], axis=0)
    assert np.allclose(node_stats(trees), want, rtol=0, atol=1e-12)


def test_evaluate_perfect_and_repeatable():
    ds = make_blobs(n_per_class=30, n_classes=3, n_features=4, seed=0)
    split = stratified_split(ds, 0.2, 0)
    plan = partition_iid(ds, split.train_indices, 1, 0)
    model = train(FederationConfig(5, 1, GrowthParams(bootstrap=False), 0), ds, plan)
    X, y = ds.features[split.train_indices], ds.labels[split.train_indices]
    rep = evaluate(model, X, y, seed=1)
    assert rep.accuracy == 1.0 and rep.n_correct == rep.n_total == y.size
    Xt, yt = ds.features[split.test_indices], ds.labels[split.test_indices]
    assert evaluate(model, Xt, yt, 4) == evaluate(model, Xt, yt, 4)


def test_report_serialisation_and_mean():
    a = EvalReport(0.5, 1, 2, 3.0, 2.0, 1.0, [1])
    b = EvalReport(1.0, 2, 2, 5.0, 3.0, 2.0, [2])
    m = mean_report([a, b])
    assert (m.accuracy, m.mean_nodes, m.runs, m.seeds) == (0.75, 4.0, 2, [1, 2])
    assert '"accuracy": 0.5' in a.to_json()
    assert a.csv_row() == [0.5, 1, 2, 3.0, 2.0, 1.0]


def test_three_tree_worked_vote():
    # three trees, three clients, classes 1..3 stored as ids 0..2
    trees = [leaf_tree([0, 1, 1]), leaf_tree([1, 2]), leaf_tree([0, 1, 2])]
    F = class_frequencies(trees, np.zeros((1, 1)), 3)
    assert F.tolist() == [[2, 4, 2]]
    assert predict_ensemble(Bag(trees, 3), [0.0]) == 1
