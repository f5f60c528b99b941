"""Ensemble prediction, accuracy and tree-structure statistics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import derive_rng
from .tree import DecisionTree

TIE_STREAM = 2


def label_count_table(tree: DecisionTree, n_classes: int) -> np.ndarray:
    """``(node_count, n_classes)`` vote counts from each leaf's label list."""
    table = np.zeros((tree.node_count, n_classes), dtype=np.int64)
    for leaf, labels in tree.label_lists.items():
        if labels:
            table[leaf] = np.bincount(labels, minlength=n_classes)
    return table


def class_frequencies(trees, X: np.ndarray, n_classes: int) -> np.ndarray:
    """Vote matrix ``F`` (rows x classes) tallied from every reached leaf's L."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    F = np.zeros((X.shape[0], n_classes), dtype=np.int64)
    for tree in trees:
        F += label_count_table(tree, n_classes)[tree.apply(X)]
    return F


def argmax_random_ties(scores: np.ndarray, seed: int, row_offset: int = 0) -> np.ndarray:
    """Row-wise argmax; tied maxima are broken uniformly at random.

    The stream for row ``r`` is derived from ``(seed, row_offset + r)`` so the
    choice does not depend on batching or evaluation order.
    """
    scores = np.asarray(scores)
    best = scores.max(axis=1, keepdims=True)
    tied = scores == best
    out = tied.argmax(axis=1)
    for r in np.flatnonzero(tied.sum(axis=1) > 1):
        options = np.flatnonzero(tied[r])
        out[r] = options[derive_rng(seed, TIE_STREAM, row_offset + int(r)).integers(options.size)]
    return out


def predict_label_lists(trees, X: np.ndarray, n_classes: int, seed: int = 0) -> np.ndarray:
    """Majority vote over the concatenated label lists of the reached leaves.

    A sample whose reached leaves are all empty is a full tie over all classes.
    """
    return argmax_random_ties(class_frequencies(trees, X, n_classes), seed)


def predict_ensemble(model, sample, seed: int = 0) -> int:
    """Single-sample convenience wrapper around ``model.predict``."""
    return int(model.predict(np.atleast_2d(np.asarray(sample, dtype=np.float64)), seed)[0])


def _count_nodes(tree: DecisionTree, node: int = 0, depth: int = 0, acc=None):
    # independent recursive traversal; returns (nodes, leaves, max leaf depth)
    if acc is None:
        acc = [0, 0, 0]
    acc[0] += 1
    if tree.feature[node] == -1:
        acc[1] += 1
        acc[2] = max(acc[2], depth)
    else:
        _count_nodes(tree, tree.left[node], depth + 1, acc)
        _count_nodes(tree, tree.right[node], depth + 1, acc)
    return acc


def node_stats(trees) -> tuple[float, float, float]:
    """Mean node count, mean leaf count and mean max depth per tree.

    Recomputed by walking each tree from its root rather than trusting the
    arena bookkeeping.
    """
    trees = list(trees)
    if not trees:
        raise ValueError("node_stats needs a non-empty forest")
    stats = np.array([_count_nodes(t) for t in trees], dtype=np.float64)
    n, leaves, depth = stats.mean(axis=0)
    return float(n), float(leaves), float(depth)


@dataclass
class EvalReport:
    accuracy: float
    n_correct: int
    n_total: int
    mean_nodes: float
    mean_leaves: float
    mean_depth: float
    seeds: list = field(default_factory=list)
    runs: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    CSV_FIELDS = ("accuracy", "n_correct", "n_total", "mean_nodes", "mean_leaves", "mean_depth")

    def csv_row(self) -> list:
        return [getattr(self, f) for f in self.CSV_FIELDS]


def evaluate(model, X: np.ndarray, y: np.ndarray, seed: int = 0) -> EvalReport:
    """Accuracy of ``model.predict`` on ``(X, y)`` plus structure statistics.

    ``model`` is anything with ``predict(X, seed)`` and a ``trees`` list.
    """
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("cannot evaluate on an empty test set")
    pred = model.predict(X, seed)
    correct = int((pred == y).sum())
    nodes, leaves, depth = node_stats(model.trees)
    return EvalReport(correct / y.size, correct, int(y.size), nodes, leaves, depth, [seed])


def mean_report(reports: list[EvalReport]) -> EvalReport:
    """Arithmetic mean over runs (accuracy is the mean of per-run accuracies)."""
    if not reports:
        raise ValueError("no reports to aggregate")
    mean = lambda attr: float(np.mean([getattr(r, attr) for r in reports]))
    return EvalReport(
        accuracy=mean("accuracy"),
        n_correct=sum(r.n_correct for r in reports),
        n_total=sum(r.n_total for r in reports),
        mean_nodes=mean("mean_nodes"),
        mean_leaves=mean("mean_leaves"),
        mean_depth=mean("mean_depth"),
        seeds=[s for r in reports for s in r.seeds],
        runs=len(reports),
    )
