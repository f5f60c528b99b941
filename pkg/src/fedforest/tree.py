"""Binary decision trees grown incrementally by successive clients.

A ``DecisionTree`` is an arena: node ``i`` is described by ``feature[i]``,
``threshold[i]``, ``left[i]``, ``right[i]`` and ``depth_of[i]``.  Leaves have
``feature == -1``.  A sample goes left when ``x[feature] <= threshold``.

Leaves may carry one of two payloads, never both:

* ``label_lists``: per-leaf list ``L`` of client majority labels;
* ``leaf_probs``: per-leaf class-probability vector.

Freshly grown trees carry neither; that is what crosses the wire during the
growth phase.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

LEAF = -1

# Gains closer than this are treated as equal so the deterministic tie-break
# (lowest feature, then lowest threshold) is not at the mercy of rounding.
GAIN_TIE_TOL = 1e-12


@dataclass(frozen=True)
class GrowthParams:
    feature_sample_count: int | None = None  # None -> floor(sqrt(N))
    max_depth: int | None = None
    min_samples_split: int = 2
    bootstrap: bool = True

    def __post_init__(self):
        if self.min_samples_split < 1:
            raise ValueError("min_samples_split must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 when set")
        if self.feature_sample_count is not None and self.feature_sample_count < 1:
            raise ValueError("feature_sample_count must be >= 1 when set")

    def features_per_node(self, n_features: int) -> int:
        if self.feature_sample_count is None:
            return max(1, math.isqrt(n_features))
        if self.feature_sample_count > n_features:
            raise ValueError(
                f"feature_sample_count={self.feature_sample_count} exceeds N={n_features}"
            )
        return self.feature_sample_count


@dataclass
class DecisionTree:
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    depth_of: list = field(default_factory=list)
    label_lists: dict = field(default_factory=dict)
    leaf_probs: dict = field(default_factory=dict)

    def __post_init__(self):
        self._arrays = None

    # -- structure -------------------------------------------------------

    @property
    def root(self) -> int:
        return 0

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        leaves = self.leaves()
        return max((self.depth_of[i] for i in leaves), default=0)

    def is_empty(self) -> bool:
        return not self.feature

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    def leaves(self) -> list[int]:
        return [i for i, f in enumerate(self.feature) if f == LEAF]

    def add_leaf(self, depth: int) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.depth_of.append(depth)
        self._arrays = None
        return len(self.feature) - 1

    def split_leaf(self, node: int, feature: int, threshold: float) -> tuple[int, int]:
        if not self.is_leaf(node):
            raise ValueError(f"node {node} is already split")
        d = self.depth_of[node] + 1
        lo, hi = self.add_leaf(d), self.add_leaf(d)
        self.feature[node] = int(feature)
        self.threshold[node] = float(threshold)
        self.left[node], self.right[node] = lo, hi
        self.label_lists.pop(node, None)
        self.leaf_probs.pop(node, None)
        return lo, hi

    def structure(self) -> tuple:
        """Hashable snapshot of the split structure (payloads excluded)."""
        return tuple(
            zip(self.feature, self.threshold, self.left, self.right)
        )

    def copy_structure(self) -> "DecisionTree":
        return DecisionTree(
            list(self.feature), list(self.threshold), list(self.left),
            list(self.right), list(self.depth_of),
        )

    # -- routing ---------------------------------------------------------

    def route(self, sample) -> int:
        node = 0
        while self.feature[node] != LEAF:
            if sample[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return node

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row of ``X``."""
        if self._arrays is None:
            self._arrays = (
                np.asarray(self.feature, dtype=np.int64),
                np.asarray(self.threshold, dtype=np.float64),
                np.asarray(self.left, dtype=np.int64),
                np.asarray(self.right, dtype=np.int64),
            )
        feat, thr, lo, hi = self._arrays
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(feat[node] != LEAF)
        while active.size:
            cur = node[active]
            f = feat[cur]
            go_left = X[active, f] <= thr[cur]
            node[active] = np.where(go_left, lo[cur], hi[cur])
            active = active[feat[node[active]] != LEAF]
        return node

    # -- wire format -----------------------------------------------------

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.node_count):
            if self.feature[i] == LEAF:
                rec = {"id": i, "kind": "leaf"}
                if i in self.label_lists:
                    rec["labels"] = [int(v) for v in self.label_lists[i]]
                if i in self.leaf_probs:
                    rec["probs"] = [float(p) for p in self.leaf_probs[i]]
            else:
                rec = {
                    "id": i,
                    "kind": "split",
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "children": [int(self.left[i]), int(self.right[i])],
                }
            nodes.append(rec)
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, payload: dict) -> "DecisionTree":
        nodes = sorted(payload["nodes"], key=lambda r: r["id"])
        if [r["id"] for r in nodes] != list(range(len(nodes))):
            raise ValueError("node ids must be 0..n-1")
        t = cls()
        if not nodes:
            return t
        for rec in nodes:
            t.add_leaf(0)
        for rec in nodes:
            i = rec["id"]
            if rec["kind"] == "split":
                t.feature[i] = int(rec["feature"])
                t.threshold[i] = float(rec["threshold"])
                t.left[i], t.right[i] = (int(c) for c in rec["children"])
            elif rec["kind"] == "leaf":
                if "labels" in rec:
                    t.label_lists[i] = [int(v) for v in rec["labels"]]
                if "probs" in rec:
                    t.leaf_probs[i] = np.asarray(rec["probs"], dtype=np.float64)
            else:
                raise ValueError(f"unknown node kind {rec['kind']!r}")
        # depths from the root; also rejects cycles and orphans
        seen, stack = set(), [(0, 0)]
        while stack:
            i, d = stack.pop()
            if i in seen:
                raise ValueError("tree is not acyclic")
            seen.add(i)
            t.depth_of[i] = d
            if t.feature[i] != LEAF:
                stack.extend([(t.left[i], d + 1), (t.right[i], d + 1)])
        if len(seen) != len(nodes):
            raise ValueError("tree has unreachable nodes")
        return t

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> "DecisionTree":
        return cls.from_dict(json.loads(text))


def entropy(class_counts) -> float:
    """Shannon entropy in bits of a class-count vector."""
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("entropy of an all-zero count vector is undefined")
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _entropy_rows(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    # counts: (n, c), totals: (n,) > 0
    p = counts / totals[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def best_split(X: np.ndarray, y: np.ndarray, candidate_features, n_classes: int | None = None):
    """Highest-gain ``(feature, threshold, gain)`` over ``candidate_features``.

    Thresholds are midpoints between consecutive distinct values.  Returns
    ``None`` when no feature can be split or no split has positive gain.
    """
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    if n < 2:
        return None
    if n_classes is None:
        n_classes = int(y.max()) + 1
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    parent_counts = onehot.sum(axis=0)
    parent_h = entropy(parent_counts)
    if parent_h <= 0.0:
        return None

    best = None
    for f in sorted(int(f) for f in candidate_features):
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        v = col[order]
        cuts = np.flatnonzero(v[:-1] < v[1:])
        if cuts.size == 0:
            continue
        left_counts = np.cumsum(onehot[order], axis=0)[cuts]
        n_left = (cuts + 1).astype(np.float64)
        n_right = n - n_left
        right_counts = parent_counts - left_counts
        child = (
            n_left * _entropy_rows(left_counts, n_left)
            + n_right * _entropy_rows(right_counts, n_right)
        ) / n
        gains = parent_h - child
        top = gains.max()
        j = int(np.flatnonzero(gains >= top - GAIN_TIE_TOL)[0])
        gain = float(gains[j])
        if best is None or gain > best[2] + GAIN_TIE_TOL:
            lo, hi = v[cuts[j]], v[cuts[j] + 1]
            thr = (lo + hi) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (f, float(thr), gain)
    if best is None or best[2] <= GAIN_TIE_TOL:
        return None
    return best


def grow(
    tree: DecisionTree,
    X: np.ndarray,
    y: np.ndarray,
    params: GrowthParams,
    rng: np.random.Generator,
    n_classes: int | None = None,
) -> DecisionTree:
    """Grow ``tree`` in place on one client's data and return it.

    Existing splits are never touched; only current leaves can be expanded.
    Leaves are left without payload.
    """
    grow_with_sample(tree, X, y, params, rng, n_classes)
    return tree


def grow_with_sample(tree, X, y, params, rng, n_classes=None) -> np.ndarray:
    """Like :func:`grow` but also return the (bootstrap) row indices used."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, n_features = X.shape
    if n == 0:
        raise ValueError("cannot grow on an empty data set")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    n_sub = params.features_per_node(n_features)
    min_split = max(2, params.min_samples_split)

    sample = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
    Xs, ys = X[sample], y[sample]

    if tree.is_empty():
        tree.add_leaf(0)
    tree.label_lists.clear()
    tree.leaf_probs.clear()

    reached = tree.apply(Xs)
    order = np.argsort(reached, kind="stable")
    leaf_ids, starts = np.unique(reached[order], return_index=True)
    groups = np.split(order, starts[1:])
    # new nodes always get larger ids, so FIFO == increasing node id
    queue = deque(zip(leaf_ids.tolist(), groups))
    while queue:
        node, rows = queue.popleft()
        if rows.size < min_split:
            continue
        if params.max_depth is not None and tree.depth_of[node] >= params.max_depth:
            continue
        yr = ys[rows]
        if (yr == yr[0]).all():
            continue
        feats = rng.choice(n_features, size=n_sub, replace=False)
        found = best_split(Xs[rows], yr, feats, n_classes)
        if found is None:
            continue
        f, thr, _ = found
        lo, hi = tree.split_leaf(node, f, thr)
        go_left = Xs[rows, f] <= thr
        queue.append((lo, rows[go_left]))
        queue.append((hi, rows[~go_left]))
    return sample


def leaf_class_counts(tree: DecisionTree, X: np.ndarray, y: np.ndarray, n_classes: int) -> dict:
    """Map leaf id -> class-count vector for the rows of ``X`` reaching it."""
    leaves = tree.apply(X)
    counts = np.zeros((tree.node_count, n_classes), dtype=np.int64)
    np.add.at(counts, (leaves, np.asarray(y, dtype=np.int64)), 1)
    return {int(i): counts[i] for i in np.unique(leaves)}


def adjust_leaves(tree: DecisionTree, X: np.ndarray, y: np.ndarray, n_classes: int | None = None) -> dict:
    """Majority label per reached leaf, ties to the lowest class id.

    All rows are used (no bootstrap).  Leaves no row reaches are absent.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("cannot adjust leaves with an empty data set")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    return {
        leaf: int(np.argmax(c))
        for leaf, c in leaf_class_counts(tree, X, y, n_classes).items()
    }
