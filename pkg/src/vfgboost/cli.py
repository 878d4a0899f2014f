"""Command-line driver: training runs, attack evaluations, and cost sweeps.

Defaults mirror the standard experiment grid (4 clients, depth 3, 5 trees,
learning rate 0.3, lambda 1, 32 buckets, 512-bit keys, epsilon 8, clip 2,
sample threshold 10, 5 seeds).  Machine-readable metrics go to newline-
delimited JSON under $VFGBOOST_OUTDIR (default ./vfgboost-runs); wall-clock
timings are written to a separate file so metric files stay byte-identical
across reruns of the same config and seeds.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import attacks, data, gbdt
from .dp import DpParams
from .gbdt import TrainConfig
from .protocol import ProtocolConfig, train_ensemble

DEFAULT_SEEDS = (1, 2, 3, 4, 5)
CLIENT_SWEEP = (2, 4, 6, 8, 10)
DEPTH_SWEEP = (2, 3, 4, 5, 6)
TREE_SWEEP = (2, 3, 4, 5, 6)
EPSILON_SWEEP = (2.0, 4.0, 6.0, 8.0, 10.0)


@dataclass
class RunConfig:
    dataset: str = "synth-binary"
    loss: str = gbdt.LOGISTIC
    clients: int = 4
    depth: int = 3
    trees: int = 5
    lr: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    buckets: int = 32
    key_bits: int = 512
    epsilon: float = 8.0
    delta: float = 1e-5
    clip: float = 2.0
    sample_threshold: int = 10
    seeds: tuple = DEFAULT_SEEDS
    encryption: bool = True
    dp: bool = True
    weakened: bool = False
    label_distribution: str = data.LABEL_UNIFORM
    train_fraction: float = 0.8

    def train_config(self) -> TrainConfig:
        return TrainConfig(n_trees=self.trees, max_depth=self.depth,
                           learning_rate=self.lr, reg_lambda=self.reg_lambda,
                           gamma=self.gamma, n_buckets=self.buckets,
                           min_child_samples=self.sample_threshold,
                           loss=self.loss)

    def protocol_config(self, seed: int, dp_epsilon: float | None = None):
        dp = None
        eps = self.epsilon if dp_epsilon is None else dp_epsilon
        if self.dp or dp_epsilon is not None:
            dp = DpParams(epsilon=eps, delta=self.delta, clip=self.clip,
                          steps=max(self.trees, 1))
        return ProtocolConfig(key_bits=self.key_bits,
                              instance_threshold=self.sample_threshold,
                              encryption=self.encryption, dp=dp,
                              weakened=self.weakened, seed=seed)


def load_dataset(spec: str, seed: int = 0) -> data.Dataset:
    """A CSV path, or a builtin generator `synth-binary[:n[:d]]` /
    `synth-regression[:n[:d]]` for runs without local dataset files."""
    if spec.startswith("synth-binary") or spec.startswith("synth-regression"):
        parts = spec.split(":")
        n = int(parts[1]) if len(parts) > 1 else 4000
        d = int(parts[2]) if len(parts) > 2 else 12
        if parts[0] == "synth-binary":
            return data.make_binary_dataset(n, d, seed=seed)
        return data.make_regression_dataset(n, d, seed=seed)
    if not os.path.exists(spec):
        raise ValueError("dataset %r: no such file and not a synth spec" % spec)
    return data.load_csv(spec)


def evaluate_run(trainer, dataset, partition, loss):
    """(train metric, test metric): accuracy for logistic, RMSE for squared."""
    raw_train = trainer.gather_train_predictions()[partition.train_ids]
    y_train = dataset.labels[partition.train_ids]
    raw_test = np.array([trainer.predict_raw_instance(int(r))
                         for r in partition.test_ids])
    y_test = dataset.labels[partition.test_ids]
    if loss == gbdt.LOGISTIC:
        train_m = float(np.mean((gbdt.sigmoid(raw_train) > 0.5) == y_train))
        test_m = float(np.mean((gbdt.sigmoid(raw_test) > 0.5) == y_test))
    else:
        train_m = float(np.sqrt(np.mean((raw_train - y_train) ** 2)))
        test_m = float(np.sqrt(np.mean((raw_test - y_test) ** 2)))
    return train_m, test_m


def _single_run(cfg: RunConfig, seed: int, dp_epsilon=None, dataset=None,
                clients=None, depth=None, trees=None, encryption=None):
    run = RunConfig(**{**asdict(cfg),
                       "clients": clients or cfg.clients,
                       "depth": depth or cfg.depth,
                       "trees": trees if trees is not None else cfg.trees,
                       "encryption": cfg.encryption if encryption is None
                                     else encryption})
    run.seeds = (seed,)
    ds = dataset if dataset is not None else load_dataset(run.dataset, seed=0)
    part = data.partition_vertical(ds, run.clients, run.label_distribution,
                                   seed=seed, train_fraction=run.train_fraction)
    t0 = time.perf_counter()
    trainer = train_ensemble(ds, part, run.train_config(),
                             run.protocol_config(seed, dp_epsilon=dp_epsilon))
    wall = time.perf_counter() - t0
    metrics = trainer.bus.snapshot_metrics()
    return trainer, ds, part, metrics, wall


def _outdir() -> str:
    out = os.environ.get("VFGBOOST_OUTDIR", "vfgboost-runs")
    os.makedirs(out, exist_ok=True)
    return out


def _write_ndjson(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_train(cfg: RunConfig, sweep: str | None = None) -> int:
    if cfg.weakened:
        raise ValueError("--unsafe-weakened is not honored by train")
    out = _outdir()
    records, timings, summaries = [], [], []
    if sweep is None:
        points = [("clients", cfg.clients)]
    elif sweep == "clients":
        points = [("clients", v) for v in CLIENT_SWEEP]
    elif sweep == "depth":
        points = [("depth", v) for v in DEPTH_SWEEP]
    elif sweep == "trees":
        points = [("trees", v) for v in TREE_SWEEP]
    else:
        raise ValueError("unknown sweep axis %r (clients|depth|trees)" % sweep)

    for axis, value in points:
        kw = {axis: value} if sweep else {}
        vals = []
        for seed in cfg.seeds:
            trainer, ds, part, metrics, wall = _single_run(cfg, seed, **kw)
            train_m, test_m = evaluate_run(trainer, ds, part, cfg.loss)
            vals.append(test_m)
            records.append({
                "command": "train", "axis": axis, "value": value, "seed": seed,
                "loss": cfg.loss, "train_metric": train_m, "test_metric": test_m,
                "total_bytes": metrics.total_bytes,
                "message_count": metrics.message_count,
                "bytes_by_kind": metrics.kind_histogram(),
            })
            timings.append({"command": "train", "axis": axis, "value": value,
                            "seed": seed, "wall_time_s": wall})
        summaries.append({
            "command": "train-summary", "axis": axis, "value": value,
            "mean_test_metric": float(np.mean(vals)),
            "min_test_metric": float(np.min(vals)),
            "max_test_metric": float(np.max(vals)),
        })
    _write_ndjson(os.path.join(out, "train_metrics.ndjson"), records + summaries)
    _write_ndjson(os.path.join(out, "train_timing.ndjson"), timings)
    for s in summaries:
        print("%s=%s  test_metric mean=%.4f min=%.4f max=%.4f"
              % (s["axis"], s["value"], s["mean_test_metric"],
                 s["min_test_metric"], s["max_test_metric"]))
    print("metrics: %s" % os.path.join(out, "train_metrics.ndjson"))
    return 0


def cmd_attack(cfg: RunConfig, epsilons=EPSILON_SWEEP, shuffled_control=False) -> int:
    """Label-guess attack grid: one no-DP column plus one column per epsilon."""
    if cfg.loss != gbdt.LOGISTIC:
        raise ValueError("guess accuracy is defined for binary labels only")
    out = _outdir()
    records = []
    grid = {}
    columns = [("no-dp", None)] + [("eps=%g" % e, e) for e in epsilons]
    for name, eps in columns:
        col = []
        for seed in cfg.seeds:
            base = RunConfig(**asdict(cfg))
            base.dp = eps is not None
            trainer, ds, part, _metrics, _wall = _single_run(base, seed,
                                                             dp_epsilon=eps)
            oracle = np.full(ds.n_samples, np.nan)
            labels = ds.labels[part.train_ids]
            if shuffled_control:
                labels = np.random.default_rng(seed).permutation(labels)
            oracle[part.train_ids] = labels
            reports = attacks.run_label_guess_attacks(trainer, oracle)
            summary = attacks.summarize_reports(reports)
            col.append(summary["mean_client_accuracy_all_foreign"])
            records.append({"command": "attack", "column": name, "seed": seed,
                            **{k: v for k, v in summary.items()},
                            "per_client": [
                                {"attacker": r.attacker_id,
                                 "n_foreign": r.n_foreign,
                                 "n_evidenced": r.n_evidenced,
                                 "n_correct": r.n_correct}
                                for r in reports]})
        grid[name] = float(np.mean(col))
    records.append({"command": "attack-grid",
                    "mean_client_accuracy_all_foreign": grid})
    _write_ndjson(os.path.join(out, "attack_report.ndjson"), records)
    width = max(len(k) for k in grid)
    print("guess accuracy (mean over clients, all foreign samples):")
    for name, v in grid.items():
        print("  %-*s  %.4f" % (width, name, v))
    print("report: %s" % os.path.join(out, "attack_report.ndjson"))
    return 0


def cmd_bench(cfg: RunConfig, sweep: str) -> int:
    if cfg.weakened:
        raise ValueError("--unsafe-weakened is not honored by bench")
    if sweep == "clients":
        points = [("clients", v) for v in CLIENT_SWEEP]
    elif sweep == "depth":
        points = [("depth", v) for v in DEPTH_SWEEP]
    elif sweep == "trees":
        points = [("trees", v) for v in TREE_SWEEP]
    else:
        raise ValueError("unknown sweep axis %r (clients|depth|trees)" % sweep)
    out = _outdir()
    records, timings = [], []
    seed = cfg.seeds[0]
    for axis, value in points:
        for enc in (True, False):
            _tr, _ds, _part, metrics, wall = _single_run(
                cfg, seed, **{axis: value}, encryption=enc)
            records.append({"command": "bench", "axis": axis, "value": value,
                            "encryption": enc,
                            "total_bytes": metrics.total_bytes,
                            "message_count": metrics.message_count,
                            "bytes_by_kind": metrics.kind_histogram()})
            timings.append({"command": "bench", "axis": axis, "value": value,
                            "encryption": enc, "wall_time_s": wall})
            print("%s=%-3s encryption=%-5s bytes=%-12d time=%.2fs"
                  % (axis, value, enc, metrics.total_bytes, wall))
    _write_ndjson(os.path.join(out, "bench_costs.ndjson"), records)
    _write_ndjson(os.path.join(out, "bench_timing.ndjson"), timings)
    print("costs: %s" % os.path.join(out, "bench_costs.ndjson"))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vfgboost",
        description="Vertical federated boosting over distributed labels")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("train", "train and report metrics"),
                        ("attack", "label-guess attack grid"),
                        ("bench", "communication/time cost sweeps")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--dataset", default="synth-binary",
                        help="CSV path or synth-binary[:n[:d]] / synth-regression[:n[:d]]")
        sp.add_argument("--loss", default=gbdt.LOGISTIC,
                        choices=list(gbdt.LOSS_KINDS))
        sp.add_argument("--clients", type=int, default=4)
        sp.add_argument("--depth", type=int, default=3)
        sp.add_argument("--trees", type=int, default=5)
        sp.add_argument("--lr", type=float, default=0.3)
        sp.add_argument("--lambda", dest="reg_lambda", type=float, default=1.0)
        sp.add_argument("--gamma", type=float, default=0.0)
        sp.add_argument("--buckets", type=int, default=32)
        sp.add_argument("--key-bits", type=int, default=512)
        sp.add_argument("--epsilon", type=float, default=8.0)
        sp.add_argument("--delta", type=float, default=1e-5)
        sp.add_argument("--clip", type=float, default=2.0)
        sp.add_argument("--sample-threshold", type=int, default=10)
        sp.add_argument("--seeds", default="1,2,3,4,5",
                        help="comma-separated seed list")
        sp.add_argument("--no-encryption", action="store_true")
        sp.add_argument("--no-dp", action="store_true")
        sp.add_argument("--sweep", default=None,
                        choices=["clients", "depth", "trees"],
                        required=(name == "bench"))
        sp.add_argument("--unsafe-weakened", action="store_true",
                        help="weakened protocol variant; attack demos only")
    return p


def _config_from_args(args) -> RunConfig:
    try:
        seeds = tuple(int(s) for s in str(args.seeds).split(",") if s != "")
    except ValueError:
        raise ValueError("--seeds expects comma-separated integers, got %r"
                         % args.seeds) from None
    if not seeds:
        raise ValueError("--seeds must name at least one seed")
    return RunConfig(dataset=args.dataset, loss=args.loss, clients=args.clients,
                     depth=args.depth, trees=args.trees, lr=args.lr,
                     reg_lambda=args.reg_lambda, gamma=args.gamma,
                     buckets=args.buckets, key_bits=args.key_bits,
                     epsilon=args.epsilon, delta=args.delta, clip=args.clip,
                     sample_threshold=args.sample_threshold, seeds=seeds,
                     encryption=not args.no_encryption, dp=not args.no_dp,
                     weakened=args.unsafe_weakened)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "train":
            return cmd_train(cfg, sweep=args.sweep)
        if args.command == "attack":
            return cmd_attack(cfg)
        return cmd_bench(cfg, sweep=args.sweep)
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
