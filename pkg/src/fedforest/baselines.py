"""Comparison models: centralized RF, NCFF, CFF-CP and Markovic-style selection.

All of them reuse :func:`fedforest.tree.grow`; they differ only in which data
each tree sees and in what the leaves store.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_rng
from .data import Dataset, PartitionPlan
from .evaluation import predict_label_lists
from .federation import (
    FederationConfig,
    growth_rng,
    init_schedule,
    run_growth_phase,
    shards_from_plan,
)
from .tree import DecisionTree, GrowthParams, adjust_leaves, grow_with_sample, leaf_class_counts

MARKOVIC_STREAM = 3


@dataclass
class ProbabilityForest:
    """Trees whose leaves hold class-probability vectors.

    Prediction averages the reached leaves' vectors and takes the argmax
    (ties to the lowest class id).  A leaf without a vector abstains.
    """

    trees: list
    n_classes: int
    schedule: object = None

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        total = np.zeros((X.shape[0], self.n_classes))
        voters = np.zeros(X.shape[0])
        for tree in self.trees:
            table = np.zeros((tree.node_count, self.n_classes))
            has = np.zeros(tree.node_count, dtype=bool)
            for leaf, p in tree.leaf_probs.items():
                table[leaf] = p
                has[leaf] = True
            reached = tree.apply(X)
            total += table[reached]
            voters += has[reached]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(voters[:, None] > 0, total / voters[:, None], 0.0)

    def predict(self, X: np.ndarray, seed: int = 0) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


@dataclass
class WeightedForest:
    """Each tree votes its leaf's most probable class with weight ``weights[t]``."""

    trees: list
    weights: list
    n_classes: int
    owners: list = field(default_factory=list)

    def predict(self, X: np.ndarray, seed: int = 0) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        score = np.zeros((X.shape[0], self.n_classes))
        rows = np.arange(X.shape[0])
        for tree, w in zip(self.trees, self.weights):
            score[rows, tree_votes(tree, X, self.n_classes)] += w
        return np.argmax(score, axis=1)


@dataclass
class MajorityForest:
    """Trees with label-list leaves, predicted by plain majority vote."""

    trees: list
    n_classes: int

    def predict(self, X: np.ndarray, seed: int = 0) -> np.ndarray:
        return predict_label_lists(self.trees, X, self.n_classes, seed)


def tree_votes(tree: DecisionTree, X: np.ndarray, n_classes: int) -> np.ndarray:
    """Single-tree class prediction from probability leaves."""
    table = np.zeros((tree.node_count, n_classes))
    for leaf, p in tree.leaf_probs.items():
        table[leaf] = p
    return np.argmax(table[tree.apply(X)], axis=1)


def _probability_leaves(tree: DecisionTree, X, y, n_classes: int) -> None:
    for leaf, counts in leaf_class_counts(tree, X, y, n_classes).items():
        tree.leaf_probs[leaf] = counts / counts.sum()


def _grow_local(X, y, params, rng, n_classes) -> DecisionTree:
    tree = DecisionTree()
    sample = grow_with_sample(tree, X, y, params, rng, n_classes)
    _probability_leaves(tree, X[sample], y[sample], n_classes)
    return tree


def train_centralized_rf(
    X: np.ndarray,
    y: np.ndarray,
    m: int,
    params: GrowthParams = GrowthParams(),
    seed: int = 0,
    n_classes: int | None = None,
    leaf_mode: str = "probability",
):
    """Ordinary random forest on pooled data.

    Tree ``t`` uses the same random stream as tree ``t`` of a one-client
    federation, so structures coincide when ``k = 1``.  ``leaf_mode`` is
    ``"probability"`` (bootstrap class fractions, averaged at prediction) or
    ``"majority"`` (majority label of all training rows, voted).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("cannot train on empty data")
    c = n_classes or int(y.max()) + 1
    if leaf_mode == "probability":
        return ProbabilityForest(
            [_grow_local(X, y, params, growth_rng(seed, t, 1), c) for t in range(m)], c
        )
    if leaf_mode == "majority":
        trees = []
        for t in range(m):
            tree = DecisionTree()
            grow_with_sample(tree, X, y, params, growth_rng(seed, t, 1), c)
            tree.label_lists = {
                leaf: [lab] for leaf, lab in adjust_leaves(tree, X, y, c).items()
            }
            for leaf in tree.leaves():
                tree.label_lists.setdefault(leaf, [])
            trees.append(tree)
        return MajorityForest(trees, c)
    raise ValueError(f"unknown leaf_mode {leaf_mode!r}")


def ncff_tree_owners(m: int, k: int) -> list[int]:
    """Client that grows each tree: ``m // k`` each, remainder to lowest ids."""
    base, extra = divmod(m, k)
    return [i for i in range(k) for _ in range(base + (i < extra))]


def train_ncff(
    shards: list,
    m: int,
    params: GrowthParams = GrowthParams(),
    seed: int = 0,
    n_classes: int | None = None,
) -> ProbabilityForest:
    """Each client grows its share of trees on its own shard only."""
    k = len(shards)
    if k < 1:
        raise ValueError("need at least one client")
    c = n_classes or int(max(int(np.max(ys)) for _, ys in shards)) + 1
    trees = []
    for t, owner in enumerate(ncff_tree_owners(m, k)):
        Xi, yi = shards[owner]
        trees.append(_grow_local(np.asarray(Xi), np.asarray(yi), params, growth_rng(seed, t, 1), c))
    return ProbabilityForest(trees, c)


def train_cffcp(config: FederationConfig, dataset: Dataset, plan: PartitionPlan, audit=None) -> ProbabilityForest:
    """Collaborative growth, then server-side sum of per-client leaf class counts."""
    shards = shards_from_plan(dataset, plan)
    c = dataset.class_count
    schedule = init_schedule(config.m, config.k, config.master_seed)
    grown = run_growth_phase(config, schedule, shards, c, audit)
    for tree in grown:
        totals: dict[int, np.ndarray] = {}
        for Xi, yi in shards:
            for leaf, counts in leaf_class_counts(tree, Xi, yi, c).items():
                totals[leaf] = totals.get(leaf, 0) + counts
        for leaf, counts in totals.items():
            if counts.sum() > 0:
                tree.leaf_probs[leaf] = counts / counts.sum()
    return ProbabilityForest(grown, c, schedule)


def validation_split(n: int, fraction: float, rng: np.random.Generator):
    n_val = int(np.floor(n * fraction))
    if n_val < 1 or n - n_val < 1:
        raise ValueError(
            f"shard of {n} rows too small for a validation fraction of {fraction}"
        )
    perm = rng.permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train_markovic(
    shards: list,
    params: GrowthParams = GrowthParams(),
    per_client_forest_size: int = 100,
    top_t: int = 10,
    validation_fraction: float = 1 / 8,
    seed: int = 0,
    n_classes: int | None = None,
) -> WeightedForest:
    """Per-client forests; keep each client's ``top_t`` trees by validation accuracy."""
    if top_t > per_client_forest_size:
        raise ValueError("top_t cannot exceed per_client_forest_size")
    c = n_classes or int(max(int(np.max(ys)) for _, ys in shards)) + 1
    trees, weights, owners = [], [], []
    for client, (Xi, yi) in enumerate(shards):
        Xi, yi = np.asarray(Xi, dtype=np.float64), np.asarray(yi, dtype=np.int64)
        tr, va = validation_split(yi.size, validation_fraction, derive_rng(seed, MARKOVIC_STREAM, client))
        scored = []
        for t in range(per_client_forest_size):
            rng = derive_rng(seed, MARKOVIC_STREAM, client, t + 1)
            tree = _grow_local(Xi[tr], yi[tr], params, rng, c)
            acc = float(np.mean(tree_votes(tree, Xi[va], c) == yi[va]))
            scored.append((acc, t, tree))
        scored.sort(key=lambda s: (-s[0], s[1]))
        for acc, _, tree in scored[:top_t]:
            trees.append(tree)
            weights.append(acc)
            owners.append(client)
    return WeightedForest(trees, weights, c, owners)
