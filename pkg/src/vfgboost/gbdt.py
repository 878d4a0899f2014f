"""Boosted-tree mathematics and a single-machine reference trainer.

Gradients/Hessians, quantile bucket thresholds, the split gain
    0.5 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma
and leaf weights -G/(H+lambda) are shared verbatim with the federated
protocol.  `centralized_train` is the correctness reference: it enumerates
candidates in a configurable feature order with first-max tie-breaking, grows
children depth-first, and turns a child into a leaf when it reaches the depth
limit or falls under the minimum sample count.  With gradient-grid
quantization enabled (the default) every partial sum is an integer multiple of
2^-grid_bits that fits float64 exactly, so a federated run with privacy
features disabled reproduces these trees bit for bit.
"""

import math
from dataclasses import dataclass, field

import numpy as np

LOGISTIC = "logistic-binary"
SQUARED = "squared-error"
LOSS_KINDS = (LOGISTIC, SQUARED)

# Per-sample gradient grid: sums over up to ~2M samples stay exact in float64.
DEFAULT_GRAD_GRID_BITS = 32


@dataclass(frozen=True)
class GradHessPair:
    g: float
    h: float
    sample_id: int = -1


@dataclass(frozen=True)
class NodeStats:
    grad_sum: float
    hess_sum: float
    count: int

    def minus(self, other: "NodeStats") -> "NodeStats":
        return NodeStats(self.grad_sum - other.grad_sum,
                         self.hess_sum - other.hess_sum,
                         self.count - other.count)

    def plus(self, other: "NodeStats") -> "NodeStats":
        return NodeStats(self.grad_sum + other.grad_sum,
                         self.hess_sum + other.hess_sum,
                         self.count + other.count)


@dataclass(frozen=True)
class BucketThresholds:
    feature_id: int
    thresholds: tuple


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def compute_grad_hess(loss: str, label: float, prev_raw: float,
                      sample_id: int = -1) -> GradHessPair:
    """First and second derivative of the loss at the current raw score."""
    if loss == LOGISTIC:
        if label not in (0, 1, 0.0, 1.0):
            raise ValueError("logistic loss requires labels in {0,1}, got %r" % label)
        p = 1.0 / (1.0 + math.exp(-prev_raw))
        return GradHessPair(g=p - label, h=p * (1.0 - p), sample_id=sample_id)
    if loss == SQUARED:
        return GradHessPair(g=prev_raw - label, h=1.0, sample_id=sample_id)
    raise ValueError("unknown loss kind: %r" % loss)


def grad_hess_arrays(loss: str, labels: np.ndarray, raw: np.ndarray,
                     grid_bits: int | None = DEFAULT_GRAD_GRID_BITS):
    """Vectorized (g, h) over a batch, optionally snapped to the 2^-grid_bits grid."""
    if loss == LOGISTIC:
        bad = ~np.isin(labels, (0.0, 1.0))
        if bad.any():
            raise ValueError("logistic loss requires labels in {0,1}")
        p = sigmoid(raw)
        g = p - labels
        h = p * (1.0 - p)
    elif loss == SQUARED:
        g = raw - labels
        h = np.ones_like(g)
    else:
        raise ValueError("unknown loss kind: %r" % loss)
    if grid_bits is not None:
        s = float(1 << grid_bits)
        g = np.round(g * s) / s
        h = np.round(h * s) / s
    return g, h


def build_buckets(feature_values, bucket_count: int,
                  feature_id: int = 0) -> BucketThresholds:
    """Quantile cut points at k/bucket_count, deduplicated, strictly increasing.

    Thresholds that cannot separate anything (at or below the minimum value)
    are dropped; a constant feature therefore yields no thresholds at all.
    """
    if bucket_count < 2:
        raise ValueError("bucket_count must be >= 2")
    arr = np.asarray(feature_values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot bucket an empty feature")
    lo = float(arr.min())
    cuts = np.quantile(arr, np.arange(1, bucket_count) / bucket_count)
    out = []
    for c in cuts:
        c = float(c)
        if c <= lo:
            continue
        if not out or c > out[-1]:
            out.append(c)
    return BucketThresholds(feature_id=feature_id, thresholds=tuple(out))


def gain_from_sums(grad_left: float, hess_left: float,
                   grad_total: float, hess_total: float,
                   reg_lambda: float, gamma: float) -> float:
    """Split gain from branch sums alone (counts are not needed)."""
    grad_right = grad_total - grad_left
    hess_right = hess_total - hess_left
    return 0.5 * (grad_left**2 / (hess_left + reg_lambda)
                  + grad_right**2 / (hess_right + reg_lambda)
                  - grad_total**2 / (hess_total + reg_lambda)) - gamma


def weight_from_sums(grad_sum: float, hess_sum: float, reg_lambda: float) -> float:
    if reg_lambda <= 0:
        raise ValueError("reg_lambda must be positive")
    return -grad_sum / (hess_sum + reg_lambda)


def split_gain(left: NodeStats, parent: NodeStats,
               reg_lambda: float, gamma: float) -> float:
    return gain_from_sums(left.grad_sum, left.hess_sum,
                          parent.grad_sum, parent.hess_sum, reg_lambda, gamma)


def leaf_weight(stats: NodeStats, reg_lambda: float) -> float:
    return weight_from_sums(stats.grad_sum, stats.hess_sum, reg_lambda)


@dataclass
class TrainConfig:
    n_trees: int = 5
    max_depth: int = 3
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    n_buckets: int = 32
    min_child_samples: int = 10
    loss: str = LOGISTIC
    base_prediction: float = 0.0
    grad_grid_bits: int | None = DEFAULT_GRAD_GRID_BITS

    def validate(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError("unknown loss kind: %r" % self.loss)
        if self.reg_lambda <= 0:
            raise ValueError("reg_lambda must be positive")
        if self.n_trees < 0 or self.max_depth < 1 or self.n_buckets < 2:
            raise ValueError("invalid tree shape parameters")


@dataclass
class CentralNode:
    depth: int
    stats: NodeStats
    feature_id: int = -1
    threshold: float = math.nan
    weight: float = math.nan
    left: "CentralNode | None" = None
    right: "CentralNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class Ensemble:
    trees: list = field(default_factory=list)
    learning_rate: float = 0.3
    base_prediction: float = 0.0
    loss: str = LOGISTIC


def centralized_train(features: np.ndarray, labels: np.ndarray,
                      config: TrainConfig, feature_order=None) -> Ensemble:
    """Single-machine trainer used as the equivalence reference.

    `feature_order` fixes the candidate enumeration (and thus tie-breaking)
    order; the default is ascending feature id.
    """
    config.validate()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty dataset")
    m, d = X.shape
    order = list(range(d)) if feature_order is None else list(feature_order)
    buckets = {f: build_buckets(X[:, f], config.n_buckets, feature_id=f)
               for f in order}

    ens = Ensemble(learning_rate=config.learning_rate,
                   base_prediction=config.base_prediction, loss=config.loss)
    raw = np.full(m, config.base_prediction, dtype=np.float64)

    for _ in range(config.n_trees):
        g, h = grad_hess_arrays(config.loss, y, raw, config.grad_grid_bits)

        def node_stats(ids):
            return NodeStats(float(g[ids].sum()), float(h[ids].sum()), len(ids))

        def grow(ids, stats, depth):
            best = None  # (gain, feature, thr_index, threshold, left_ids, left_stats)
            for f in order:
                col = X[ids, f]
                for k, v in enumerate(buckets[f].thresholds):
                    left_ids = ids[col < v]
                    left = node_stats(left_ids)
                    gain = split_gain(left, stats, config.reg_lambda, config.gamma)
                    if best is None or gain > best[0]:
                        best = (gain, f, k, v, left_ids, left)
            if best is None or best[0] <= 0.0:
                return CentralNode(depth=depth, stats=stats,
                                   weight=leaf_weight(stats, config.reg_lambda))
            gain, f, k, v, left_ids, left = best
            right_ids = ids[X[ids, f] >= v]
            right = stats.minus(left)
            node = CentralNode(depth=depth, stats=stats, feature_id=f, threshold=v)
            node.left = _child(left_ids, left, depth + 1)
            node.right = _child(right_ids, right, depth + 1)
            return node

        def _child(ids, stats, depth):
            if depth >= config.max_depth or stats.count < config.min_child_samples:
                return CentralNode(depth=depth, stats=stats,
                                   weight=leaf_weight(stats, config.reg_lambda))
            return grow(ids, stats, depth)

        all_ids = np.arange(m)
        root = grow(all_ids, node_stats(all_ids), 0)
        ens.trees.append(root)
        raw = raw + config.learning_rate * _tree_outputs(root, X)
    return ens


def _tree_outputs(root: CentralNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    for i in range(X.shape[0]):
        out[i] = _walk(root, X[i])
    return out


def _walk(node: CentralNode, x: np.ndarray) -> float:
    while not node.is_leaf:
        if node.feature_id >= x.shape[0]:
            raise ValueError("sample lacks feature %d" % node.feature_id)
        node = node.left if x[node.feature_id] < node.threshold else node.right
    return node.weight


def predict_raw(ensemble: Ensemble, sample) -> float:
    """Raw score base + lr * sum of leaf weights; activation is the caller's."""
    x = np.asarray(sample, dtype=np.float64)
    total = ensemble.base_prediction
    for root in ensemble.trees:
        total += ensemble.learning_rate * _walk(root, x)
    return total


def predict_output(ensemble: Ensemble, sample) -> float:
    raw = predict_raw(ensemble, sample)
    if ensemble.loss == LOGISTIC:
        return float(sigmoid(raw))
    return raw
