"""
Growing trees across clients
============================

Every tree visits all clients in its own random order.  While trees grow,
leaves carry no labels; afterwards each client reports one majority label per
leaf and prediction is a vote over all collected labels.
"""

import json

import numpy as np

from fedforest import AuditLog, FederationConfig, make_blobs, partition_alpha_chunking, stratified_split, train
from fedforest.evaluation import class_frequencies, evaluate

ds = make_blobs(seed=0)
split = stratified_split(ds, 0.2, seed=0)
plan = partition_alpha_chunking(ds, split.train_indices, k=10, alpha=2, seed=0)

audit = AuditLog(keep_messages=True)
model = train(FederationConfig(m=30, k=10, master_seed=0), ds, plan, audit)
print("visiting order of tree 0:", model.schedule.per_tree_order[0])

# %%
# One growth hand-off as it travels to the server: split nodes and bare leaves.
# (A client holding a single class cannot split, so skip those.)
uploads = [json.loads(m[-1]) for m in audit.messages if m[0] == "growth" and m[4] == "to_server"]
wire = next(w for w in uploads if len(w["nodes"]) > 1)
print(json.dumps(wire["nodes"][:3], indent=1))

# %%
# After adjustment every leaf holds one label per client.
tree = model.trees[0]
leaf = tree.leaves()[0]
print("leaf", leaf, "labels", tree.label_lists[leaf])

# %%
Xt, yt = ds.features[split.test_indices], ds.labels[split.test_indices]
F = class_frequencies(model.trees, Xt[:3], ds.class_count)
print("votes for three test rows:\n", F)
report = evaluate(model, Xt, yt, seed=0)
print(f"accuracy {report.accuracy:.3f}, {report.mean_nodes:.1f} nodes/tree, depth {report.mean_depth:.1f}")

# %%
# The model round-trips through JSON.
again = type(model).loads(model.dumps())
print("same predictions:", np.array_equal(again.predict(Xt, 0), model.predict(Xt, 0)))
