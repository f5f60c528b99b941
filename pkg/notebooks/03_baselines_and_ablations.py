"""
Baselines and hyperparameter sweeps
===================================

Same data, same partition, five models; then one-parameter sweeps of the
collaborative model.  The ``fedforest`` command runs the same experiments
from the shell.
"""

import dataclasses

from fedforest.cli import ExperimentConfig, load_dataset, run_ablation, run_experiment

base = ExperimentConfig(synthetic=dict(seed=0), k=10, m=30, alpha=2, runs=3, master_seed=0,
                        per_client_forest_size=20, top_t=3)
ds = load_dataset(base)

for name in ("centralized", "proposed", "cffcp", "ncff", "markovic"):
    res = run_experiment(dataclasses.replace(base, model=name), ds)
    print(f"{name:12s} accuracy {res.mean.accuracy:.3f}  nodes/tree {res.mean.mean_nodes:6.1f}")

# %%
# Depth caps and larger split thresholds both shrink trees.
for param, values in (("max_depth", [3, 6, None]), ("min_samples_split", [2, 15, 50])):
    for value, res in run_ablation(base, param, values, ds):
        print(f"{param}={value}: {res.mean.accuracy:.3f}")

# %%
# NCFF trees only ever see one client's classes, so adding trees helps slowly.
for value, res in run_ablation(dataclasses.replace(base, model="ncff"), "n_trees", [10, 30, 60], ds):
    print(f"ncff m={value}: {res.mean.accuracy:.3f}")
