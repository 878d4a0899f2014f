"""Shared helpers for comparing federated runs against the plaintext trainer."""

import numpy as np

from vfgboost import data
from vfgboost.gbdt import TrainConfig, centralized_train
from vfgboost.protocol import FederatedTrainer, ProtocolConfig, train_ensemble


def protocol_tree(trainer, node):
    """Resolve a shared tree into plain (feature, threshold, weight) tuples
    by reading the owners' lookup tables (test-only introspection)."""
    if node.is_leaf:
        return ("leaf", trainer.clients[node.leaf_holder].leaf_table[node.leaf_key])
    src, rec = node.owner
    f, v = trainer.clients[src].split_table[rec]
    return ("split", f, v,
            protocol_tree(trainer, node.left),
            protocol_tree(trainer, node.right))


def oracle_tree(node):
    if node.is_leaf:
        return ("leaf", node.weight)
    return ("split", node.feature_id, node.threshold,
            oracle_tree(node.left), oracle_tree(node.right))


def enumeration_order(partition):
    """The protocol's global candidate order: clients ascending, then each
    client's features ascending."""
    return [f for c in sorted(partition.client_features)
            for f in partition.client_features[c]]


def run_pair(trial_seed, n=None, d=None, n_clients=None, trees=None, depth=None,
             buckets=None, key_bits=256, flip=0.2):
    """One random federated run plus its matched centralized oracle."""
    rng = np.random.default_rng(trial_seed)
    n = n or int(rng.integers(30, 201))
    d = d or int(rng.integers(2, 9))
    n_clients = n_clients or int(rng.integers(2, min(6, d) + 1))
    trees = trees or int(rng.integers(1, 4))
    depth = depth or int(rng.integers(1, 4))
    buckets = buckets or int(rng.integers(3, 9))

    ds = data.make_binary_dataset(n, d, seed=trial_seed, flip_fraction=flip)
    part = data.partition_vertical(ds, n_clients, seed=trial_seed + 101,
                                   train_fraction=0.8)
    cfg = TrainConfig(n_trees=trees, max_depth=depth, n_buckets=buckets,
                      min_child_samples=0)
    proto = ProtocolConfig(key_bits=key_bits, instance_threshold=0, dp=None,
                           seed=trial_seed)
    trainer = train_ensemble(ds, part, cfg, proto)
    oracle = centralized_train(ds.features[part.train_ids],
                               ds.labels[part.train_ids], cfg,
                               feature_order=enumeration_order(part))
    return trainer, oracle, ds, part, cfg


def quick_fed(n=80, d=4, n_clients=2, trees=1, depth=2, buckets=4, seed=5,
              key_bits=256, instance_threshold=0, dp=None, encryption=True,
              weakened=False, flip=0.2, min_child=0, built=True):
    ds = data.make_binary_dataset(n, d, seed=seed, flip_fraction=flip)
    part = data.partition_vertical(ds, n_clients, seed=seed + 11,
                                   train_fraction=0.8)
    cfg = TrainConfig(n_trees=trees, max_depth=depth, n_buckets=buckets,
                      min_child_samples=min_child)
    proto = ProtocolConfig(key_bits=key_bits, instance_threshold=instance_threshold,
                           dp=dp, encryption=encryption, weakened=weakened,
                           seed=seed)
    trainer = FederatedTrainer(ds, part, cfg, proto)
    if built:
        trainer.setup_exchange()
        trainer.train_ensemble()
    return trainer, ds, part, cfg
