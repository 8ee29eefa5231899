import csv

import numpy as np
import pytest

from nnetm import cli
from nnetm.analysis import BoundReport
from nnetm.config import RunConfig
from nnetm.neural import Mlp, load_weights, save_weights
from nnetm.signals import load_batch_csv

TINY = [
    "signals.horizon=0.2", "signals.batch_size=2", "training.epochs=2",
    "training.pretrain_epochs=3", "training.checkpoint_every=1", "test.batch_size=3",
]


@pytest.fixture
def config_file(tmp_path):
    cfg = RunConfig().with_overrides(TINY + [f"output.directory={tmp_path / 'run'}"])
    return str(cfg.save(tmp_path / "tiny.ini")), tmp_path / "run"


def run(args):
    return cli.main(args)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_generate(config_file):
    cfg, out = config_file
    assert run(["generate", "-c", cfg]) == 0
    train = load_batch_csv(out / "signals" / "train")
    test = load_batch_csv(out / "signals" / "test")
    assert (train.batch_size, train.n_agents) == (2, 2)
    assert (test.batch_size, test.n_agents) == (3, 5)
    assert (out / "config.ini").exists()


def test_generate_then_train_from_files(config_file):
    cfg, out = config_file
    assert run(["generate", "-c", cfg, "--which", "train"]) == 0
    assert run(["pretrain", "-c", cfg, "--set", f"signals.path={out / 'signals' / 'train'}"]) == 0
    assert (out / "weights" / "pretrained.csv").exists()


def test_missing_signal_files(config_file, tmp_path):
    cfg, _ = config_file
    assert run(["train", "-c", cfg, "--set", f"signals.path={tmp_path / 'nope'}"]) == 2


def test_train_writes_outputs(config_file):
    cfg, out = config_file
    assert run(["train", "-c", cfg]) == 0
    w = out / "weights"
    assert (w / "pretrained.csv").exists()
    assert (w / "final_lam0.1.csv").exists()
    assert (w / "checkpoint_lam0.1_epoch0002.csv").exists()
    trace = read_rows(out / "traces" / "cost_lam0.1.csv")
    assert [r["epoch"] for r in trace] == ["0", "1"]


def test_zero_epochs_keeps_pretrained(config_file):
    cfg, out = config_file
    assert run(["train", "-c", cfg, "--set", "training.epochs=0"]) == 0
    a = load_weights(out / "weights" / "pretrained.csv")
    b = load_weights(out / "weights" / "final_lam0.1.csv")
    np.testing.assert_array_equal(a.get_flat(), b.get_flat())
    assert read_rows(out / "traces" / "cost_lam0.1.csv") == []


def test_train_sweep_and_init(config_file, tmp_path):
    cfg, out = config_file
    init = save_weights(Mlp.initialize(seed=9), tmp_path / "init.csv")
    assert run(["train", "-c", cfg, "--sweep", "--init", str(init),
                "--set", "training.epochs=1"]) == 0
    for tag in ("lam0.001", "lam0.1", "lam1"):
        assert (out / "weights" / f"final_{tag}.csv").exists()
    assert not (out / "weights" / "pretrained.csv").exists()


def test_evaluate_full_communication(config_file):
    cfg, out = config_file
    assert run(["evaluate", "-c", cfg, "--full-communication"]) == 0
    rows = read_rows(out / "eval" / "metrics_full_communication.csv")
    assert len(rows) == 3
    for r in rows:
        assert float(r["comm_rate"]) == 1.0
        assert float(r["rel_error"]) == 0.0
        assert r["bound_violated"] == "0"


def test_evaluate_fixed_eta_matches_pretrained(config_file):
    cfg, out = config_file
    assert run(["evaluate", "-c", cfg, "--fixed-eta", "0.5", "--export-traces", "1"]) == 0
    rows = read_rows(out / "eval" / "metrics_fixed_eta0.5.csv")
    assert all(r["trigger_ok"] == "1" for r in rows)
    assert (out / "traces" / "rollout_fixed_eta0.5_seq000.csv").exists()
    half = save_weights(Mlp.zeros(), out / "half.csv")
    assert run(["evaluate", "-c", cfg, "--weights", str(half)]) == 0
    rows_net = read_rows(out / "eval" / "metrics_half.csv")
    assert [r["comm_rate"] for r in rows_net] == [r["comm_rate"] for r in rows]


def test_evaluate_dim_mismatch(config_file, tmp_path):
    cfg, _ = config_file
    w = save_weights(Mlp.initialize((2, 4, 1)), tmp_path / "small.csv")
    assert run(["evaluate", "-c", cfg, "--weights", str(w)]) == 2


def test_sweep_uses_existing_weights(config_file):
    cfg, out = config_file
    assert run(["sweep", "-c", cfg, "--no-train"]) == 2
    assert run(["sweep", "-c", cfg, "--set", "training.epochs=1", "--bins", "5"]) == 0
    assert (out / "sweep" / "histogram.csv").exists()
    assert (out / "sweep" / "stats.csv").exists()
    assert "lambda" in (out / "sweep" / "summary.txt").read_text()
    assert run(["sweep", "-c", cfg, "--no-train"]) == 0


def test_check_bounds(config_file):
    cfg, out = config_file
    assert run(["check-bounds", "-c", cfg, "--seeds", "3"]) == 0
    rows = read_rows(out / "eval" / "bounds.csv")
    assert len(rows) == 6
    assert all(r["bound_violated"] == "0" for r in rows)
    assert run(["check-bounds", "-c", cfg, "--seeds", "1",
                "--set", "protocol.kind=sliding_mode"]) == 2


def test_vector_threshold_flag(tmp_path):
    # five agents at eta = 1: this seed exceeds the per-agent threshold term
    args = ["check-bounds", "-o", str(tmp_path), "--fixed-eta", "1", "--seeds", "1",
            "--set", "test.seed=1048"]
    assert run(args) == 4
    assert run(args + ["--vector-threshold"]) == 0
    rows = read_rows(tmp_path / "eval" / "bounds.csv")
    assert rows[0]["bound_violated"] == "0"


def test_bound_violation_exit_code(config_file, monkeypatch):
    cfg, _ = config_file

    def fake(seq, *a, **k):
        return BoundReport(np.zeros(1), np.ones(1), 1.0, 0.0, True, 0.0)

    monkeypatch.setattr(cli, "check_disagreement_bound", fake)
    assert run(["evaluate", "-c", cfg, "--fixed-eta", "0.5"]) == 4


def test_config_errors(config_file):
    cfg, _ = config_file
    assert run(["evaluate", "-c", cfg, "--set", "trigger.sigma=-1"]) == 2
    assert run(["evaluate", "-c", cfg, "--set", "trigger.epsilon=0"]) == 2
    assert run(["evaluate", "-c", "/nonexistent.ini"]) == 2
    assert run(["evaluate", "-c", cfg, "--fixed-eta", "1.5"]) == 2


def test_numerical_failure_exit_code(config_file, monkeypatch):
    cfg, _ = config_file
    from nnetm import training

    def nan_backward(ro, net, **kw):
        return [p * np.nan for p in net.parameters()]

    monkeypatch.setattr(training, "backward", nan_backward)
    assert run(["train", "-c", cfg, "--set", "training.pretrain_epochs=0"]) == 3


def test_output_override(tmp_path):
    out = tmp_path / "elsewhere"
    assert run(["generate", "-o", str(out), "--which", "test",
                "--set", "signals.horizon=0.01", "--set", "test.batch_size=1"]) == 0
    assert (out / "signals" / "test" / "seq_000.csv").exists()


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "nnetm", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    assert "check-bounds" in res.stdout
