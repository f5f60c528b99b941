"""Dataset loading, stratified splitting and client partitioning.

All index lists (train/test splits, client shards) are row ids into the
owning ``Dataset``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed datasets or infeasible partition requests."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple = ()
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if y.shape != (X.shape[0],):
            raise DataError(
                f"labels length {y.shape[0]} does not match {X.shape[0]} feature rows"
            )
        if not np.isfinite(X).all():
            raise DataError("features contain non-finite values")
        if y.size and (y.min() < 0):
            raise DataError("labels must be non-negative class ids")
        c = int(y.max()) + 1 if y.size else 0
        if c and np.unique(y).size != c:
            raise DataError("every class id in [0, c) must appear at least once")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


@dataclass(frozen=True)
class TrainTestSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray


@dataclass(frozen=True)
class PartitionPlan:
    client_shards: list
    mode: str
    alpha: int | None = None
    seed: int | None = None

    @property
    def k(self) -> int:
        return len(self.client_shards)

    def class_histograms(self, labels: np.ndarray, n_classes: int) -> np.ndarray:
        """Per-shard class counts, shape ``(k, n_classes)``."""
        return np.stack(
            [np.bincount(labels[s], minlength=n_classes) for s in self.client_shards]
        )

    def report(self, labels: np.ndarray, n_classes: int) -> dict:
        """JSON-compatible audit summary: one class histogram per shard."""
        hist = self.class_histograms(labels, n_classes)
        return {
            "mode": self.mode,
            "alpha": self.alpha,
            "seed": self.seed,
            "k": self.k,
            "max_classes_bound": (
                max_classes_per_client(n_classes, self.alpha, self.k)
                if self.mode == "alpha_chunking"
                else n_classes
            ),
            "shards": [
                {
                    "client": i,
                    "size": int(h.sum()),
                    "n_classes": int((h > 0).sum()),
                    "class_histogram": h.tolist(),
                }
                for i, h in enumerate(hist)
            ],
        }


def load_csv(path, label_column=-1) -> Dataset:
    """Read a headed CSV; ``label_column`` is a column name or integer index.

    Labels are relabelled to ``0..c-1`` by order of first appearance and the
    original values are kept in ``Dataset.class_names``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if label_column not in header:
                raise DataError(f"{path}: label column {label_column!r} not in header")
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column)
            if not -len(header) <= label_idx < len(header):
                raise DataError(f"{path}: label column index {label_idx} out of range")
            label_idx %= len(header)

        rows, raw_labels = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(
                    f"{path}: line {lineno} has {len(record)} fields, expected {len(header)}"
                )
            values = []
            for col, cell in enumerate(record):
                if col == label_idx:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {header[col]!r}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: line {lineno}, column {header[col]!r}: non-finite value {cell!r}"
                    )
                values.append(v)
            rows.append(values)
            raw_labels.append(record[label_idx].strip())

    mapping: dict[str, int] = {}
    labels = [mapping.setdefault(lab, len(mapping)) for lab in raw_labels]
    if len(mapping) < 2:
        raise DataError(f"{path}: need at least 2 classes, found {len(mapping)}")
    n_feat = len(header) - 1
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), n_feat)
    return Dataset(
        X,
        np.asarray(labels, dtype=np.int64),
        class_names=tuple(mapping),
        feature_names=tuple(h for i, h in enumerate(header) if i != label_idx),
    )


def save_csv(ds: Dataset, path, label_name: str = "label") -> None:
    names = ds.feature_names or tuple(f"x{i}" for i in range(ds.feature_count))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, label_name])
        for row, lab in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def _class_rows(labels: np.ndarray, indices: np.ndarray, n_classes: int) -> list[np.ndarray]:
    return [indices[labels[indices] == c] for c in range(n_classes)]


def stratified_split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0) -> TrainTestSplit:
    """Per class, shuffle and send ``floor((1 - test_fraction) * n)`` rows to train."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c, rows in enumerate(_class_rows(ds.labels, np.arange(ds.n_rows), ds.class_count)):
        if rows.size < 2:
            raise DataError(f"class {c} has {rows.size} row(s); need at least 2 to split")
        rows = rng.permutation(rows)
        # round() guards against 0.8*10 evaluating to 7.999...
        n_train = math.floor(round((1.0 - test_fraction) * rows.size, 9))
        train.append(rows[:n_train])
        test.append(rows[n_train:])
    return TrainTestSplit(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)))


def max_classes_per_client(c: int, alpha: int, k: int) -> int:
    """Upper bound on distinct classes per client under alpha-chunking."""
    return -(-(c * alpha) // k)


def partition_alpha_chunking(
    ds: Dataset, train: Sequence[int], k: int, alpha: int, seed: int = 0
) -> PartitionPlan:
    """Split each class into ``alpha`` chunks, shuffle all chunks, deal round-robin."""
    if k < 1 or alpha < 1:
        raise DataError(f"k and alpha must be >= 1 (got k={k}, alpha={alpha})")
    train = np.asarray(train, dtype=np.int64)
    rng = np.random.default_rng(seed)
    chunks = []
    for c, rows in enumerate(_class_rows(ds.labels, train, ds.class_count)):
        if rows.size == 0:
            continue
        if rows.size < alpha:
            raise DataError(f"class {c} has {rows.size} training rows, fewer than alpha={alpha}")
        chunks.extend(np.array_split(rng.permutation(rows), alpha))
    order = rng.permutation(len(chunks))
    shards: list[list[np.ndarray]] = [[] for _ in range(k)]
    for pos, chunk_id in enumerate(order):
        shards[pos % k].append(chunks[chunk_id])
    empty = [i for i, s in enumerate(shards) if not s]
    if empty:
        raise DataError(
            f"alpha-chunking left clients {empty} empty ({len(chunks)} chunks for {k} clients)"
        )
    return PartitionPlan(
        [np.sort(np.concatenate(s)) for s in shards], mode="alpha_chunking", alpha=alpha, seed=seed
    )


def partition_iid(ds: Dataset, train: Sequence[int], k: int, seed: int = 0) -> PartitionPlan:
    """Deal every class's shuffled rows round-robin so each client sees all classes."""
    if k < 1:
        raise DataError(f"k must be >= 1 (got {k})")
    train = np.asarray(train, dtype=np.int64)
    rng = np.random.default_rng(seed)
    shards: list[list[np.ndarray]] = [[] for _ in range(k)]
    for c, rows in enumerate(_class_rows(ds.labels, train, ds.class_count)):
        if rows.size == 0:
            continue
        if rows.size < k:
            raise DataError(f"class {c} has {rows.size} training rows, fewer than k={k}")
        rows = rng.permutation(rows)
        for i in range(k):
            shards[i].append(rows[i::k])
    return PartitionPlan([np.sort(np.concatenate(s)) for s in shards], mode="iid", seed=seed)


def make_blobs(
    n_per_class: int | Sequence[int] = 625,
    n_classes: int = 6,
    n_features: int = 10,
    clusters_per_class: int = 8,
    spread: float = 0.7,
    box: float = 4.0,
    seed: int = 0,
) -> Dataset:
    """Seeded Gaussian-blob classification data.

    Each class is a mixture of ``clusters_per_class`` isotropic Gaussians
    with standard deviation ``spread`` whose centres are drawn uniformly in
    ``[-box, box]^n_features``.  Overlap (and so difficulty) grows with
    ``spread / box``.
    """
    rng = np.random.default_rng(seed)
    sizes = (
        [int(n_per_class)] * n_classes
        if np.ndim(n_per_class) == 0
        else [int(s) for s in n_per_class]
    )
    if len(sizes) != n_classes:
        raise DataError("n_per_class must give one size per class")
    X, y = [], []
    for c, size in enumerate(sizes):
        centres = rng.uniform(-box, box, size=(clusters_per_class, n_features))
        which = rng.integers(0, clusters_per_class, size=size)
        X.append(centres[which] + spread * rng.standard_normal((size, n_features)))
        y.append(np.full(size, c))
    return Dataset(np.vstack(X), np.concatenate(y))
