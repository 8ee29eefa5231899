"""Command-line entry point: generate, pretrain, train, evaluate, sweep, check-bounds.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 bound or trigger-guarantee violation.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import check_trigger_guarantees, check_disagreement_bound, lambda_sweep_summary
from .config import ConfigError, RunConfig
from .etm import FUZZY, HARD, TriggerPolicy
from .neural import Mlp, WeightFileError, load_weights, save_weights
from .protocols import LINEAR, simulate
from .signals import SignalBatch, generate_sinusoid_batch, load_batch_csv, save_batch_csv
from .training import (NumericalFailure, TrainingRun, baseline_errors, compute_cost, pretrain,
                       train)

log = logging.getLogger("nnetm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BOUND = 0, 2, 3, 4


class InputError(Exception):
    pass


def lambda_tag(lam: float) -> str:
    return f"lam{lam:g}"


# data plumbing

def training_signals(cfg: RunConfig) -> SignalBatch:
    s = cfg.signals
    if s.path:
        path = Path(s.path)
        if not (path / "batch.json").exists():
            raise InputError(f"signal directory {path} has no batch.json")
        batch = load_batch_csv(path)
        if batch.n_agents != cfg.graph.n_agents:
            raise InputError(f"signal files have {batch.n_agents} agents, "
                             f"graph has {cfg.graph.n_agents}")
        return batch
    return generate_sinusoid_batch(s.batch_size, cfg.graph.n_agents, s.horizon, s.step,
                                   s.amp_offset_range, s.freq_range, seed=s.seed)


def test_signals(cfg: RunConfig) -> SignalBatch:
    s, t = cfg.signals, cfg.test
    return generate_sinusoid_batch(t.batch_size, t.graph.n_agents, s.horizon, s.step,
                                   s.amp_offset_range, s.freq_range, seed=t.seed)


def fuzzy_policy(cfg: RunConfig, net: Mlp) -> TriggerPolicy:
    t = cfg.trigger
    return TriggerPolicy(t.sigma, t.epsilon, FUZZY, t.alpha, network=net)


def run_pretrain(cfg: RunConfig, signals: SignalBatch, graph) -> Mlp:
    net = Mlp.initialize(cfg.network.layer_dims, seed=cfg.network.init_seed)
    tr = cfg.training
    if tr.pretrain_epochs == 0:
        return net
    res = pretrain(net, signals, graph, cfg.protocol, fuzzy_policy(cfg, net),
                   target_eta=tr.target_eta, epochs=tr.pretrain_epochs,
                   learning_rate=tr.learning_rate, clip_norm=tr.clip_norm)
    print(f"pretrain: mean |eta - {tr.target_eta:g}| = {res.mean_deviation:.3g}"
          + ("" if res.converged else " (not converged)"))
    return res.net


def run_train(cfg: RunConfig, signals: SignalBatch, graph, init: Mlp, lam: float,
              out: Path) -> Mlp:
    tr = cfg.training
    net = init.copy()
    run = TrainingRun(signals, graph, cfg.protocol, fuzzy_policy(cfg, net), lam=lam,
                      epochs=tr.epochs, learning_rate=tr.learning_rate,
                      clip_norm=tr.clip_norm, seed=cfg.signals.seed)
    tag = lambda_tag(lam)
    wdir = out / "weights"

    def checkpoint(epoch, net, cost):
        if tr.checkpoint_every > 0 and (epoch + 1) % tr.checkpoint_every == 0:
            save_weights(net, wdir / f"checkpoint_{tag}_epoch{epoch + 1:04d}.csv")

    try:
        train(run, on_epoch=checkpoint)
    finally:
        _write_trace(out / "traces" / f"cost_{tag}.csv", run)
    save_weights(net, wdir / f"final_{tag}.csv")
    last = run.cost_trace[-1] if run.cost_trace else float("nan")
    print(f"train {tag}: {len(run.cost_trace)} epochs, final cost {last:.6g}")
    return net


def _write_trace(path: Path, run: TrainingRun) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "cost", "mean_rel_error", "mean_comm_rate"])
        for i, row in enumerate(zip(run.cost_trace, run.error_trace, run.comm_trace)):
            w.writerow([i] + [repr(float(v)) for v in row])


def evaluation_policy(cfg: RunConfig, weights: str | None, fixed_eta: float | None):
    t = cfg.trigger
    if weights is not None:
        try:
            net = load_weights(weights, expected_dims=cfg.network.layer_dims)
        except (OSError, WeightFileError) as exc:
            raise InputError(str(exc)) from exc
        return TriggerPolicy(t.sigma, t.epsilon, HARD, t.alpha, network=net)
    eta = t.eta_fixed if fixed_eta is None else fixed_eta
    return TriggerPolicy(t.sigma, t.epsilon, HARD, t.alpha, eta_fixed=eta)


METRIC_COLUMNS = ["seq", "mse", "comm_rate", "mse_fc", "rel_error", "total", "lambda",
                  "degenerate", "events", "bound_max_excess", "bound_tolerance",
                  "bound_violated", "delta_min", "delta_max", "min_gap", "trigger_ok"]


def evaluate_batch(cfg: RunConfig, signals: SignalBatch, graph, policy, lam: float,
                   full_communication: bool = False, vector_threshold: bool = False):
    """Hard-mode rollouts with per-sequence cost, bound and trigger checks."""
    protocol = cfg.protocol
    ro = simulate(signals, graph, protocol, policy, full_communication=full_communication)
    fc = baseline_errors(signals, graph, protocol)
    t = cfg.trigger
    rows, costs, violations = [], [], 0
    for b in range(len(ro)):
        seq = ro.sequence(b)
        cost = compute_cost(seq, fc[b], lam)
        costs.append(cost)
        row = {"seq": b, "mse": cost.mse, "comm_rate": cost.comm_rate, "mse_fc": cost.mse_fc,
               "rel_error": cost.rel_error, "total": cost.total, "lambda": lam,
               "degenerate": int(cost.degenerate), "events": int(seq.fired.sum())}
        if protocol.kind == LINEAR:
            rep = check_disagreement_bound(seq, graph, protocol.kappa, t.sigma, t.epsilon,
                                       signals.rate_bound, vector_threshold=vector_threshold)
            row.update(bound_max_excess=rep.max_violation, bound_tolerance=rep.tolerance,
                       bound_violated=int(rep.violated))
            violations += rep.violated
        if seq.eta_trace is not None:
            c1 = check_trigger_guarantees(seq, policy)
            row.update(delta_min=c1.min_delta, delta_max=c1.max_delta, min_gap=c1.min_gap,
                       trigger_ok=int(c1.ok))
            violations += not c1.ok
        rows.append(row)
    return ro, rows, costs, violations


def _write_rows(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _summary_line(tag: str, costs, violations: int) -> str:
    e = np.mean([c.rel_error for c in costs])
    c = np.mean([c.comm_rate for c in costs])
    return (f"{tag}: {len(costs)} sequences, mean E_r {e:.4g}, mean C {c:.4g}, "
            f"violations {violations}")


# commands

def cmd_generate(cfg: RunConfig, args) -> int:
    out = Path(cfg.output)
    written = []
    if args.which in ("train", "both"):
        batch = training_signals(cfg)
        written += save_batch_csv(batch, out / "signals" / "train")
    if args.which in ("test", "both"):
        written += save_batch_csv(test_signals(cfg), out / "signals" / "test")
    print(f"wrote {len(written)} sequence files under {out / 'signals'}")
    return EXIT_OK


def cmd_pretrain(cfg: RunConfig, args) -> int:
    out = Path(cfg.output)
    graph = cfg.graph.build()
    net = run_pretrain(cfg, training_signals(cfg), graph)
    path = save_weights(net, out / "weights" / "pretrained.csv")
    print(f"wrote {path}")
    return EXIT_OK


def _initial_network(cfg: RunConfig, args, signals, graph) -> Mlp:
    if getattr(args, "init", None):
        try:
            return load_weights(args.init, expected_dims=cfg.network.layer_dims)
        except (OSError, WeightFileError) as exc:
            raise InputError(str(exc)) from exc
    net = run_pretrain(cfg, signals, graph)
    save_weights(net, Path(cfg.output) / "weights" / "pretrained.csv")
    return net


def cmd_train(cfg: RunConfig, args) -> int:
    out = Path(cfg.output)
    graph = cfg.graph.build()
    signals = training_signals(cfg)
    init = _initial_network(cfg, args, signals, graph)
    lambdas = cfg.training.lambdas if args.sweep else (cfg.training.lam,)
    for lam in lambdas:
        run_train(cfg, signals, graph, init, lam, out)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = Path(cfg.output)
    graph = cfg.test.graph.build()
    signals = load_batch_csv(args.signals) if args.signals else test_signals(cfg)
    if signals.n_agents != graph.n_agents:
        raise InputError("test signals and test graph disagree on the number of agents")
    policy = evaluation_policy(cfg, args.weights, args.fixed_eta)
    if args.full_communication:
        tag = "full_communication"
    elif args.weights:
        tag = Path(args.weights).stem
    else:
        tag = f"fixed_eta{policy.eta_fixed:g}"
    ro, rows, costs, violations = evaluate_batch(cfg, signals, graph, policy, cfg.training.lam,
                                                 args.full_communication, args.vector_threshold)
    _write_rows(out / "eval" / f"metrics_{tag}.csv", rows)
    for b in range(min(args.export_traces, len(ro))):
        ro.sequence(b).to_csv(out / "traces" / f"rollout_{tag}_seq{b:03d}.csv")
    print(_summary_line(tag, costs, violations))
    return EXIT_BOUND if violations else EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    out = Path(cfg.output)
    train_graph, test_graph = cfg.graph.build(), cfg.test.graph.build()
    wdir = Path(args.weights_dir) if args.weights_dir else out / "weights"
    missing = [lam for lam in cfg.training.lambdas
               if not (wdir / f"final_{lambda_tag(lam)}.csv").exists()]
    if missing:
        if args.no_train:
            raise InputError(f"no weight files for lambdas {missing} in {wdir}")
        signals = training_signals(cfg)
        init = _initial_network(cfg, args, signals, train_graph)
        for lam in missing:
            run_train(cfg, signals, train_graph, init, lam, out)
        wdir = out / "weights" if not args.weights_dir else wdir
    test = test_signals(cfg)
    results, total_violations = {}, 0
    for lam in cfg.training.lambdas:
        tag = lambda_tag(lam)
        policy = evaluation_policy(cfg, str(wdir / f"final_{tag}.csv"), None)
        _, rows, costs, violations = evaluate_batch(cfg, test, test_graph, policy, lam,
                                              vector_threshold=args.vector_threshold)
        _write_rows(out / "eval" / f"metrics_final_{tag}.csv", rows)
        results[lam] = costs
        total_violations += violations
        print(_summary_line(tag, costs, violations))
    summary = lambda_sweep_summary(results, bins=args.bins)
    summary.to_csv(out / "sweep" / "histogram.csv", out / "sweep" / "stats.csv")
    (out / "sweep" / "summary.txt").write_text(summary.text() + "\n")
    print(summary.text())
    return EXIT_BOUND if total_violations else EXIT_OK


def cmd_check_bounds(cfg: RunConfig, args) -> int:
    if cfg.protocol.kind != LINEAR:
        raise InputError("the explicit disagreement bound is defined for the linear protocol")
    out = Path(cfg.output)
    graph = cfg.test.graph.build()
    s = cfg.signals
    if args.weights:
        policies = [(Path(args.weights).stem, evaluation_policy(cfg, args.weights, None))]
    else:
        etas = args.fixed_eta if args.fixed_eta else [0.0, 1.0]
        policies = [(f"fixed_eta{e:g}", evaluation_policy(cfg, None, e)) for e in etas]
    rows, total = [], 0
    for tag, policy in policies:
        for seed in range(args.seeds):
            sig = generate_sinusoid_batch(1, graph.n_agents, s.horizon, s.step,
                                          s.amp_offset_range, s.freq_range,
                                          seed=cfg.test.seed + seed)
            _, r, _, v = evaluate_batch(cfg, sig, graph, policy, cfg.training.lam,
                                        vector_threshold=args.vector_threshold)
            r[0]["seq"] = f"{tag}/seed{cfg.test.seed + seed}"
            rows += r
            total += v
        print(f"{tag}: {args.seeds} seeds checked")
    _write_rows(out / "eval" / "bounds.csv", rows)
    print(f"violations: {total}")
    return EXIT_BOUND if total else EXIT_OK


# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nnetm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", help="INI run configuration (defaults if omitted)")
        sp.add_argument("-o", "--output", help="output directory (overrides the config)")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config entry; repeatable")
        return sp

    def bound_option(sp):
        sp.add_argument("--vector-threshold", action="store_true",
                        help="scale the threshold term of the disagreement bound by sqrt(N)")
        return sp

    g = common(sub.add_parser("generate", help="write signal batches as CSV"))
    g.add_argument("--which", choices=("train", "test", "both"), default="both")
    g.set_defaults(func=cmd_generate)

    pt = common(sub.add_parser("pretrain", help="fit the network to a constant eta"))
    pt.set_defaults(func=cmd_pretrain)

    t = common(sub.add_parser("train", help="pretrain (unless --init) then train"))
    t.add_argument("--init", help="start from this weight file instead of pre-training")
    t.add_argument("--sweep", action="store_true", help="train every lambda in training.lambdas")
    t.set_defaults(func=cmd_train)

    e = bound_option(common(sub.add_parser("evaluate",
                                           help="hard-mode evaluation on the test batch")))
    src = e.add_mutually_exclusive_group()
    src.add_argument("--weights", help="trained weight file")
    src.add_argument("--fixed-eta", type=float, help="constant eta instead of a network")
    src.add_argument("--full-communication", action="store_true")
    e.add_argument("--signals", help="directory of test signal CSVs (else generated)")
    e.add_argument("--export-traces", type=int, default=0, metavar="N",
                   help="write rollout traces of the first N sequences")
    e.set_defaults(func=cmd_evaluate)

    s = bound_option(common(sub.add_parser("sweep",
                                           help="train (if needed) and evaluate every lambda")))
    s.add_argument("--weights-dir", help="directory holding final_lam*.csv files")
    s.add_argument("--init", help="start training from this weight file")
    s.add_argument("--no-train", action="store_true", help="fail instead of training")
    s.add_argument("--bins", type=int, default=20)
    s.set_defaults(func=cmd_sweep)

    b = bound_option(common(sub.add_parser("check-bounds",
                                           help="disagreement bound and trigger checks")))
    b.add_argument("--weights", help="trained weight file (default: fixed eta 0 and 1)")
    b.add_argument("--fixed-eta", type=float, action="append")
    b.add_argument("--seeds", type=int, default=100)
    b.set_defaults(func=cmd_check_bounds)
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = list(args.set)
    if args.output:
        overrides.append(f"output.directory={args.output}")
    return cfg.with_overrides(overrides) if overrides else cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if getattr(args, "fixed_eta", None) is not None:
            for v in np.atleast_1d(args.fixed_eta):
                if not 0.0 <= v <= 1.0:
                    raise InputError("--fixed-eta must lie in [0, 1]")
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.ini")
        return args.func(cfg, args)
    except (ConfigError, InputError, WeightFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
