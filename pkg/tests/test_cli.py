import json
import os

import numpy as np
import pytest

from vfgboost import cli


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    out = tmp_path / "runs"
    monkeypatch.setenv("VFGBOOST_OUTDIR", str(out))
    return out


def _read_ndjson(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


FAST = ["--dataset", "synth-binary:300:4", "--clients", "2", "--trees", "2",
        "--depth", "2", "--buckets", "4", "--key-bits", "256",
        "--sample-threshold", "0", "--seeds", "1"]


def test_train_writes_metrics(outdir):
    assert cli.main(["train", *FAST]) == 0
    recs = _read_ndjson(outdir / "train_metrics.ndjson")
    rows = [r for r in recs if r["command"] == "train"]
    assert len(rows) == 1
    assert 0.0 <= rows[0]["test_metric"] <= 1.0
    assert rows[0]["total_bytes"] > 0
    assert any(r["command"] == "train-summary" for r in recs)
    timing = _read_ndjson(outdir / "train_timing.ndjson")
    assert timing[0]["wall_time_s"] > 0


def test_train_metrics_file_reproducible(outdir):
    assert cli.main(["train", *FAST]) == 0
    first = (outdir / "train_metrics.ndjson").read_bytes()
    assert cli.main(["train", *FAST]) == 0
    assert (outdir / "train_metrics.ndjson").read_bytes() == first


def test_train_sweep_rows(outdir):
    args = ["train", "--dataset", "synth-binary:300:10", "--trees", "1",
            "--depth", "2", "--buckets", "3", "--key-bits", "256",
            "--sample-threshold", "0", "--seeds", "1", "--no-dp",
            "--no-encryption", "--sweep", "clients"]
    assert cli.main(args) == 0
    rows = [r for r in _read_ndjson(outdir / "train_metrics.ndjson")
            if r["command"] == "train"]
    assert [r["value"] for r in rows] == [2, 4, 6, 8, 10]


def test_train_zero_trees_baseline(outdir):
    assert cli.main(["train", *FAST[:-4], "--trees", "0", "--seeds", "1"]) == 0
    rows = [r for r in _read_ndjson(outdir / "train_metrics.ndjson")
            if r["command"] == "train"]
    assert rows[0]["total_bytes"] > 0  # setup still exchanges ids/keys


def test_train_rejects_weakened_flag(outdir, capsys):
    assert cli.main(["train", *FAST, "--unsafe-weakened"]) == 1
    assert "weakened" in capsys.readouterr().err


def test_bench_rejects_weakened_flag(outdir, capsys):
    assert cli.main(["bench", "--sweep", "trees", *FAST,
                     "--unsafe-weakened"]) == 1
    assert "weakened" in capsys.readouterr().err


def test_attack_rejects_regression(outdir, capsys):
    assert cli.main(["attack", "--dataset", "synth-regression:100:3",
                     "--loss", "squared-error", "--seeds", "1"]) == 1
    assert "binary" in capsys.readouterr().err


def test_attack_grid_columns(outdir):
    cfg = cli.RunConfig(dataset="synth-binary:400:4", clients=2, trees=2,
                        depth=2, buckets=4, key_bits=256, sample_threshold=0,
                        seeds=(1,))
    assert cli.cmd_attack(cfg, epsilons=(4.0, 8.0)) == 0
    recs = _read_ndjson(outdir / "attack_report.ndjson")
    grid = [r for r in recs if r["command"] == "attack-grid"]
    assert len(grid) == 1
    cols = grid[0]["mean_client_accuracy_all_foreign"]
    assert set(cols) == {"no-dp", "eps=4", "eps=8"}
    per_run = [r for r in recs if r["command"] == "attack"]
    assert {r["column"] for r in per_run} == {"no-dp", "eps=4", "eps=8"}
    assert all("pooled_accuracy_evidenced" in r for r in per_run)


def test_attack_shuffled_control_near_half(outdir):
    cfg = cli.RunConfig(dataset="synth-binary:1500:6", clients=3, trees=4,
                        depth=3, buckets=8, key_bits=256, sample_threshold=0,
                        seeds=(1, 2))
    assert cli.cmd_attack(cfg, epsilons=(), shuffled_control=True) == 0
    recs = _read_ndjson(outdir / "attack_report.ndjson")
    rows = [r for r in recs if r["command"] == "attack"]
    accs, ns = [], []
    for r in rows:
        ev = sum(c["n_evidenced"] for c in r["per_client"])
        ok = sum(c["n_correct"] for c in r["per_client"])
        accs.append(ok)
        ns.append(ev)
    acc = sum(accs) / sum(ns)
    assert abs(acc - 0.5) < 3 * 0.5 / np.sqrt(sum(ns))


def test_bench_single_axis(outdir):
    cfg = cli.RunConfig(dataset="synth-binary:250:4", clients=2, trees=1,
                        depth=2, buckets=3, key_bits=256, sample_threshold=0,
                        seeds=(1,), dp=False)
    assert cli.cmd_bench(cfg, sweep="trees") == 0
    rows = _read_ndjson(outdir / "bench_costs.ndjson")
    enc = {r["value"]: r["total_bytes"] for r in rows if r["encryption"]}
    plain = {r["value"]: r["total_bytes"] for r in rows if not r["encryption"]}
    assert list(enc) == [2, 3, 4, 5, 6]
    for v in enc:
        assert enc[v] > plain[v]
    assert all(b[1] > a[1] for a, b in zip(sorted(plain.items()),
                                           sorted(plain.items())[1:]))


def test_bench_requires_axis(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bench", *FAST])
    assert exc.value.code == 2


def test_unknown_sweep_axis_rejected(capsys):
    with pytest.raises(SystemExit):
        cli.main(["train", *FAST, "--sweep", "zebras"])


def test_bad_seed_list(outdir, capsys):
    assert cli.main(["train", *FAST[:-2], "--seeds", "a,b"]) == 1
    assert "seeds" in capsys.readouterr().err


def test_missing_dataset_file(outdir, capsys):
    assert cli.main(["train", "--dataset", "/nope/missing.csv",
                     "--seeds", "1"]) == 1
    assert "missing.csv" in capsys.readouterr().err


def test_train_regression_reports_rmse(outdir):
    assert cli.main(["train", "--dataset", "synth-regression:300:4",
                     "--loss", "squared-error", "--clients", "2", "--trees", "2",
                     "--depth", "2", "--buckets", "4", "--key-bits", "256",
                     "--sample-threshold", "0", "--no-dp", "--seeds", "1"]) == 0
    rows = [r for r in _read_ndjson(outdir / "train_metrics.ndjson")
            if r["command"] == "train"]
    assert rows[0]["loss"] == "squared-error"
    assert rows[0]["test_metric"] > 0  # RMSE
    # fitting reduces error against the zero-prediction baseline
    assert cli.main(["train", "--dataset", "synth-regression:300:4",
                     "--loss", "squared-error", "--clients", "2", "--trees", "0",
                     "--key-bits", "256", "--seeds", "1"]) == 0
    base = [r for r in _read_ndjson(outdir / "train_metrics.ndjson")
            if r["command"] == "train"][0]
    assert rows[0]["test_metric"] < base["test_metric"]


def test_csv_path_roundtrip(outdir, tmp_path):
    rng = np.random.default_rng(0)
    rows = ["f0,f1,f2,label"]
    for i in range(120):
        y = i % 2
        rows.append("%f,%f,%f,%d" % (rng.normal() + y, rng.normal() - y,
                                     rng.normal(), y))
    path = tmp_path / "toy.csv"
    path.write_text("\n".join(rows) + "\n")
    assert cli.main(["train", "--dataset", str(path), "--clients", "2",
                     "--trees", "1", "--depth", "2", "--buckets", "3",
                     "--key-bits", "256", "--sample-threshold", "0",
                     "--seeds", "1"]) == 0
