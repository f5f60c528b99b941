"""Collaborative federated random forest simulator with baselines."""

from .data import (
    Dataset,
    PartitionPlan,
    TrainTestSplit,
    load_csv,
    make_blobs,
    max_classes_per_client,
    partition_alpha_chunking,
    partition_iid,
    stratified_split,
)
from .evaluation import EvalReport, evaluate, node_stats, predict_ensemble
from .federation import AuditLog, EnsembleModel, FederationConfig, init_schedule, round_assignments, train
from .tree import DecisionTree, GrowthParams, adjust_leaves, best_split, entropy, grow

__version__ = "0.1.0"
