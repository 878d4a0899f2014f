"""Dataset loading, vertical partitioning, and label-ownership assignment.

A vertical partition gives every client the full aligned rows of its own
feature columns; ground-truth labels are additionally split so each training
row's label belongs to exactly one client.  Feature columns are dealt
round-robin after a seeded shuffle; label ownership is either a per-row
uniform draw or contiguous blocks over the shuffled training ids.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

LABEL_UNIFORM = "uniform-random"
LABEL_BLOCKS = "contiguous-blocks"


@dataclass
class Dataset:
    features: np.ndarray  # (m, d) float64
    labels: np.ndarray  # (m,) float64
    ids: np.ndarray  # (m,) aligned sample ids, 0..m-1
    feature_names: list = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass
class VerticalPartition:
    n_clients: int
    ids: np.ndarray
    feature_owner: dict  # feature_id -> client_id
    client_features: dict  # client_id -> sorted list of feature ids
    label_owner: np.ndarray  # per train id position? indexed by sample id; -1 for test ids
    client_label_ids: dict  # client_id -> np.ndarray of owned train ids
    train_ids: np.ndarray
    test_ids: np.ndarray

    def manifest(self) -> dict:
        return {
            "n_clients": self.n_clients,
            "client_features": {str(c): [int(f) for f in fs]
                                for c, fs in self.client_features.items()},
            "client_label_ids": {str(c): [int(i) for i in ids]
                                 for c, ids in self.client_label_ids.items()},
            "train_ids": [int(i) for i in self.train_ids],
            "test_ids": [int(i) for i in self.test_ids],
        }

    def save_manifest(self, path):
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh)


def load_csv(path, label_column: str = "label") -> Dataset:
    """Load a numeric CSV with a header row into a dense dataset.

    Categoricals must be integer-encoded upstream; a missing or non-numeric
    cell is an error that names its row and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError("%s: missing header row" % path)
        if label_column not in header:
            raise ValueError("%s: no column named %r" % (path, label_column))
        label_idx = header.index(label_column)
        rows = []
        for rno, row in enumerate(reader, start=2):
            vals = []
            for cno, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    raise ValueError("%s: missing value at row %d column %r"
                                     % (path, rno, header[cno]))
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError("%s: non-numeric cell %r at row %d column %r"
                                     % (path, cell, rno, header[cno])) from None
            rows.append(vals)
    if not rows:
        raise ValueError("%s: no data rows" % path)
    mat = np.asarray(rows, dtype=np.float64)
    labels = mat[:, label_idx]
    features = np.delete(mat, label_idx, axis=1)
    names = [h for i, h in enumerate(header) if i != label_idx]
    return Dataset(features=features, labels=labels,
                   ids=np.arange(mat.shape[0]), feature_names=names)


def train_test_split(dataset: Dataset, fraction: float, seed: int):
    """Seeded shuffle split; returns (train_ids, test_ids), disjoint and covering."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0,1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n_samples)
    n_train = int(round(dataset.n_samples * fraction))
    train = np.sort(perm[:n_train])
    test = np.sort(perm[n_train:])
    return train.astype(np.int64), test.astype(np.int64)


def partition_vertical(dataset: Dataset, n_clients: int,
                       label_distribution: str = LABEL_UNIFORM,
                       seed: int = 0,
                       train_fraction: float = 0.8) -> VerticalPartition:
    if n_clients < 1:
        raise ValueError("need at least one client")
    if n_clients > dataset.n_features:
        raise ValueError("cannot spread %d features over %d clients"
                         % (dataset.n_features, n_clients))
    if label_distribution not in (LABEL_UNIFORM, LABEL_BLOCKS):
        raise ValueError("unknown label distribution %r" % label_distribution)

    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(dataset.n_features)
    client_features = {c: sorted(int(f) for f in shuffled[c::n_clients])
                       for c in range(n_clients)}
    feature_owner = {f: c for c, fs in client_features.items() for f in fs}

    train_ids, test_ids = train_test_split(dataset, train_fraction, seed)

    label_owner = np.full(dataset.n_samples, -1, dtype=np.int64)
    if label_distribution == LABEL_UNIFORM:
        label_owner[train_ids] = rng.integers(0, n_clients, size=train_ids.size)
    else:
        order = rng.permutation(train_ids)
        block = math.ceil(train_ids.size / n_clients)
        for c in range(n_clients):
            label_owner[order[c * block:(c + 1) * block]] = c
    client_label_ids = {c: train_ids[label_owner[train_ids] == c]
                        for c in range(n_clients)}
    return VerticalPartition(
        n_clients=n_clients, ids=dataset.ids, feature_owner=feature_owner,
        client_features=client_features, label_owner=label_owner,
        client_label_ids=client_label_ids,
        train_ids=train_ids, test_ids=test_ids)


def make_binary_dataset(n_samples: int, n_features: int, seed: int,
                        flip_fraction: float = 0.22,
                        separation: float = 0.9) -> Dataset:
    """Synthetic binary task: every feature carries equal signal, labels
    optionally noisy.

    The class-conditional mean of every column is +/- separation, so splits
    are available on every feature and commit ownership spreads evenly over
    the clients of a vertical partition.
    """
    rng = np.random.default_rng(seed)
    y = (rng.random(n_samples) < 0.5).astype(np.float64)
    X = rng.normal(size=(n_samples, n_features))
    X += np.outer(2.0 * y - 1.0, np.full(n_features, separation))
    if flip_fraction > 0:
        flips = rng.random(n_samples) < flip_fraction
        y[flips] = 1.0 - y[flips]
    return Dataset(features=X, labels=y, ids=np.arange(n_samples),
                   feature_names=["f%d" % i for i in range(n_features)])


def make_regression_dataset(n_samples: int, n_features: int, seed: int,
                            noise: float = 0.5) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_samples, n_features))
    w = rng.normal(size=n_features)
    y = X @ w + noise * rng.normal(size=n_samples)
    return Dataset(features=X, labels=y, ids=np.arange(n_samples),
                   feature_names=["f%d" % i for i in range(n_features)])
