"""
Label-skewed client shards
==========================

Each class is cut into ``alpha`` chunks and the chunks are dealt round-robin
to ``k`` clients, so no client sees more than ceil(c * alpha / k) classes.
"""

import numpy as np

from fedforest import make_blobs, partition_alpha_chunking, partition_iid, stratified_split
from fedforest.data import max_classes_per_client

ds = make_blobs(n_per_class=200, n_classes=6, seed=0)
split = stratified_split(ds, test_fraction=0.2, seed=0)
print(ds.n_rows, "rows,", ds.class_count, "classes;", split.train_indices.size, "for training")

# %%
# Two chunks per class over ten clients: at most two classes per client.
print("bound:", max_classes_per_client(6, 2, 10))
plan = partition_alpha_chunking(ds, split.train_indices, k=10, alpha=2, seed=0)
print(plan.report(ds.labels, ds.class_count))

# %%
# Larger alpha spreads every class over more clients.  With alpha=1 there
# would be fewer chunks than clients and the partitioner refuses.
for alpha in (2, 4, 6):
    plan = partition_alpha_chunking(ds, split.train_indices, k=10, alpha=alpha, seed=0)
    seen = (plan.class_histograms(ds.labels, ds.class_count) > 0).sum(axis=1)
    print(f"alpha={alpha}: classes per client {seen.tolist()}")

# %%
# The IID baseline deals shuffled rows evenly.
iid = partition_iid(ds, split.train_indices, k=10, seed=0)
print(np.array([len(s) for s in iid.client_shards]))
