"""Server-side orchestration of collaborative tree growth and leaf aggregation.

Clients are simulated in-process.  Every hand-off between the server and a
client goes through the JSON wire format of :class:`~fedforest.tree.DecisionTree`,
so what a client sends back is exactly what an auditor could observe.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_rng
from .data import Dataset, PartitionPlan
from .tree import DecisionTree, GrowthParams, adjust_leaves, grow

logger = logging.getLogger(__name__)

# stream-domain tags for derive_rng
GROWTH_STREAM = 0
SCHEDULE_STREAM = 1


@dataclass(frozen=True)
class FederationConfig:
    m: int
    k: int
    growth: GrowthParams = GrowthParams()
    master_seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.m < self.k:
            raise ValueError(f"need m >= k, got m={self.m}, k={self.k}")


@dataclass(frozen=True)
class PermutationSchedule:
    per_tree_order: np.ndarray  # (m, k); row t is the client order for tree t

    @property
    def m(self) -> int:
        return self.per_tree_order.shape[0]

    @property
    def k(self) -> int:
        return self.per_tree_order.shape[1]


@dataclass
class AuditLog:
    """Structured record of every growth and adjustment job.

    With ``keep_messages`` the raw wire payloads are retained too, which is
    what the privacy-boundary checks inspect.
    """

    keep_messages: bool = False
    records: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    def growth(self, h, client, tree_idx, before, after, wire_up, wire_down):
        self.records.append(
            {
                "phase": "growth",
                "iteration": h,
                "client": client,
                "tree": tree_idx,
                "nodes_before": before,
                "nodes_after": after,
                "node_delta": after - before,
            }
        )
        if self.keep_messages:
            self.messages.append(("growth", h, client, tree_idx, "to_client", wire_down))
            self.messages.append(("growth", h, client, tree_idx, "to_server", wire_up))

    def adjustment(self, client, tree_idx, leaves_reached, wire_up):
        self.records.append(
            {
                "phase": "adjustment",
                "client": client,
                "tree": tree_idx,
                "leaves_reached": leaves_reached,
            }
        )
        if self.keep_messages:
            self.messages.append(("adjustment", None, client, tree_idx, "to_server", wire_up))

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


@dataclass
class EnsembleModel:
    trees: list
    config: FederationConfig
    schedule: PermutationSchedule
    n_classes: int

    def predict(self, X: np.ndarray, seed: int = 0) -> np.ndarray:
        from .evaluation import predict_label_lists

        return predict_label_lists(self.trees, X, self.n_classes, seed)

    def to_dict(self) -> dict:
        g = self.config.growth
        return {
            "config": {
                "m": self.config.m,
                "k": self.config.k,
                "master_seed": self.config.master_seed,
                "n_classes": self.n_classes,
                "growth": {
                    "feature_sample_count": g.feature_sample_count,
                    "max_depth": g.max_depth,
                    "min_samples_split": g.min_samples_split,
                    "bootstrap": g.bootstrap,
                },
            },
            "schedule": self.schedule.per_tree_order.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> "EnsembleModel":
        d = json.loads(text)
        c = d["config"]
        cfg = FederationConfig(c["m"], c["k"], GrowthParams(**c["growth"]), c["master_seed"])
        return cls(
            [DecisionTree.from_dict(t) for t in d["trees"]],
            cfg,
            PermutationSchedule(np.asarray(d["schedule"], dtype=np.int64)),
            c["n_classes"],
        )


def init_schedule(m: int, k: int, seed: int) -> PermutationSchedule:
    """One independent uniform permutation of the clients per tree."""
    if k < 1 or m < k:
        raise ValueError(f"need m >= k >= 1, got m={m}, k={k}")
    rng = derive_rng(seed, SCHEDULE_STREAM)
    order = np.stack([rng.permutation(k) for _ in range(m)]).astype(np.int64)
    return PermutationSchedule(order)


def round_assignments(schedule: PermutationSchedule, h: int) -> dict[int, list[int]]:
    """Trees (0-based indices) each client grows in iteration ``h`` (1-based)."""
    if not 1 <= h <= schedule.k:
        raise ValueError(f"iteration h must be in 1..{schedule.k}, got {h}")
    col = schedule.per_tree_order[:, h - 1]
    return {i: np.flatnonzero(col == i).tolist() for i in range(schedule.k)}


def growth_rng(master_seed: int, tree_idx: int, h: int) -> np.random.Generator:
    return derive_rng(master_seed, GROWTH_STREAM, tree_idx, h)


def _client_grow(wire: str, X, y, params, rng, n_classes) -> tuple[str, int, int]:
    tree = DecisionTree.loads(wire)
    before = tree.node_count
    grow(tree, X, y, params, rng, n_classes)
    return tree.dumps(), before, tree.node_count


def run_growth_phase(
    config: FederationConfig,
    schedule: PermutationSchedule,
    shards: list,
    n_classes: int,
    audit: AuditLog | None = None,
) -> list[DecisionTree]:
    """Grow every tree through its client permutation, one client per iteration.

    ``shards`` is a list of ``(X_i, y_i)`` pairs.  Returned trees carry no
    leaf payload.
    """
    if len(shards) != config.k:
        raise ValueError(f"expected {config.k} shards, got {len(shards)}")
    for i, (Xi, yi) in enumerate(shards):
        if len(yi) == 0:
            raise ValueError(f"client {i} has an empty shard")
    ensemble = [DecisionTree().dumps() for _ in range(config.m)]
    for h in range(1, config.k + 1):
        for client, tree_ids in round_assignments(schedule, h).items():
            Xi, yi = shards[client]
            for t in tree_ids:
                down = ensemble[t]
                up, before, after = _client_grow(
                    down, Xi, yi, config.growth,
                    growth_rng(config.master_seed, t, h), n_classes,
                )
                ensemble[t] = up
                if audit is not None:
                    audit.growth(h, client, t, before, after, up, down)
        logger.debug("growth iteration %d/%d done", h, config.k)
    return [DecisionTree.loads(w) for w in ensemble]


def run_adjustment_phase(
    trees: list[DecisionTree],
    shards: list,
    n_classes: int,
    audit: AuditLog | None = None,
) -> list[DecisionTree]:
    """Collect each client's per-leaf majority label into the leaves' lists."""
    out = []
    for t, tree in enumerate(trees):
        wire = tree.dumps()
        per_client = []
        for client, (Xi, yi) in enumerate(shards):
            local = DecisionTree.loads(wire)
            labels = adjust_leaves(local, Xi, yi, n_classes)
            local.label_lists = {leaf: [lab] for leaf, lab in labels.items()}
            up = local.dumps()
            if audit is not None:
                audit.adjustment(client, t, len(labels), up)
            per_client.append(DecisionTree.loads(up).label_lists)
        merged = tree.copy_structure()
        for leaf in merged.leaves():
            merged.label_lists[leaf] = [
                lists[leaf][0] for lists in per_client if leaf in lists
            ]
        out.append(merged)
    return out


def shards_from_plan(ds: Dataset, plan: PartitionPlan) -> list:
    return [(ds.features[s], ds.labels[s]) for s in plan.client_shards]


def train(
    config: FederationConfig,
    dataset: Dataset,
    plan: PartitionPlan,
    audit: AuditLog | None = None,
) -> EnsembleModel:
    """Full protocol: schedule, k growth iterations, leaf adjustment."""
    if plan.k != config.k:
        raise ValueError(f"plan has {plan.k} shards but config.k={config.k}")
    shards = shards_from_plan(dataset, plan)
    c = dataset.class_count
    schedule = init_schedule(config.m, config.k, config.master_seed)
    grown = run_growth_phase(config, schedule, shards, c, audit)
    trees = run_adjustment_phase(grown, shards, c, audit)
    return EnsembleModel(trees, config, schedule, c)
