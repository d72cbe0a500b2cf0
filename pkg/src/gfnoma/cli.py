"""Command-line entry point.

Subcommands:
  gen-data   synthesize a training dataset file
  train      train the detection ensemble from a config
  bank       train per-sparsity models and calibrate thresholds
  sweep      run a Monte Carlo sweep and write CSV/SVG results
  flops      print the analytical complexity table or a single count
  estimate   run blind sparsity estimation over a dataset file

Exit codes: 0 success, 1 configuration error (including bad flags),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import complexity, harness, signal_model, sparsity_est
from .errors import ConfigurationError
from .rng import TRAIN_STREAM, stream_rng


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _load_config(args) -> harness.ExperimentConfig:
    if args.config:
        config = harness.load_config(args.config)
    else:
        config = harness.ExperimentConfig()
    if args.seed is not None:
        config.master_seed = args.seed
    if args.out is not None:
        config.output_dir = Path(args.out)
    return config


def _cmd_gen_data(args) -> int:
    config = _load_config(args)
    scenario = harness.build_scenario(config.scenario, config.master_seed)
    rng = stream_rng(config.master_seed, TRAIN_STREAM, 0)
    count = args.count or config.train.samples
    feats, sups = signal_model.generate_dataset_arrays(scenario, count, rng)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / (args.name or "dataset.gfna")
    signal_model.write_dataset(
        path, feats, sups,
        n_devices=scenario.n_devices,
        n_subcarriers=scenario.n_subcarriers,
        n_slots=scenario.n_slots,
        n_antennas=scenario.n_antennas,
    )
    print(f"wrote {count} samples to {path}")
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args)
    manifest = harness.train_pipeline(config)
    print(f"ensemble manifest: {manifest}")
    return 0


def _cmd_bank(args) -> int:
    config = _load_config(args)
    manifest = harness.bank_pipeline(config, args.max_sparsity)
    print(f"bank manifest: {manifest}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    models = None
    needs_models = {"daud", "daud_ensemble"} & set(config.sweep.algorithms)
    if needs_models:
        models_dir = Path(args.models) if args.models \
            else Path(config.output_dir) / "models"
        models = harness.load_ensemble(models_dir)
    rows = harness.run_sweep(config, models=models)
    for row in rows:
        print(f"{row.axis}={row.value:g} {row.algorithm}: "
              f"p_succ={row.p_succ:.4f} (+/-{row.ci_half_width:.4f})")
    print(f"results: {Path(config.output_dir) / 'results.csv'}")
    return 0


def _cmd_flops(args) -> int:
    if args.table1:
        print(complexity.table1_report())
        if args.csv:
            with open(args.csv, "w") as fh:
                fh.write("algorithm,k,total_flops,rounded_3sig\n")
                for alg, k, total, rounded in complexity.table1_rows():
                    fh.write(f"{alg},{k},{total:.10g},{rounded:.10g}\n")
            print(f"csv: {args.csv}")
        return 0
    report = {
        "daud": lambda: complexity.flops_daud(
            args.devices, args.subcarriers, args.width, args.depth, args.active),
        "ls_bomp": lambda: complexity.flops_ls_bomp(
            args.devices, args.subcarriers, args.active),
        "mmse_bomp": lambda: complexity.flops_mmse_bomp(
            args.devices, args.subcarriers, args.active),
    }[args.algorithm]()
    print(report)
    return 0


def _cmd_estimate(args) -> int:
    bank = sparsity_est.load_model_bank(args.bank)
    data = signal_model.read_dataset(args.data)
    out_path = Path(args.out or "estimates.csv")
    correct_k = 0
    correct_support = 0
    unresolved = 0
    n = len(data["features"])
    with open(out_path, "w") as fh:
        fh.write("index,k_true,k_hat,resolved,support_exact\n")
        for i in range(n):
            est = sparsity_est.estimate_sparsity(data["features"][i], bank)
            true_support = data["supports"][i]
            exact = est.resolved and est.k_hat == len(true_support) and \
                np.array_equal(np.sort(est.support), np.sort(true_support))
            correct_k += est.resolved and est.k_hat == len(true_support)
            correct_support += exact
            unresolved += not est.resolved
            fh.write(f"{i},{len(true_support)},{est.k_hat},"
                     f"{int(est.resolved)},{int(exact)}\n")
    print(f"sparsity accuracy: {correct_k}/{n}; exact supports: "
          f"{correct_support}/{n}; unresolved: {unresolved}")
    print(f"per-sample results: {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gfnoma",
                     description="Grant-free NOMA active-user-detection laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config file (key = value INI)")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("gen-data", help="synthesize a training dataset file")
    common(p)
    p.add_argument("--count", type=int, default=None, help="samples to generate")
    p.add_argument("--name", help="dataset file name (default dataset.gfna)")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train the detection ensemble")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("bank", help="train per-sparsity models with thresholds")
    common(p)
    p.add_argument("--max-sparsity", type=int, required=True,
                   help="largest sparsity level K")
    p.set_defaults(func=_cmd_bank)

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep")
    common(p)
    p.add_argument("--models", help="directory or manifest of trained models")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("flops", help="analytical complexity model")
    p.add_argument("--table1", action="store_true",
                   help="print the reference comparison table")
    p.add_argument("--csv", help="also write the table as CSV")
    p.add_argument("--algorithm", choices=("daud", "ls_bomp", "mmse_bomp"),
                   default="daud")
    p.add_argument("--devices", type=int, default=complexity.TABLE_DEVICES)
    p.add_argument("--subcarriers", type=int, default=complexity.TABLE_SUBCARRIERS)
    p.add_argument("--width", type=int, default=complexity.TABLE_WIDTH)
    p.add_argument("--depth", type=int, default=complexity.TABLE_DEPTH)
    p.add_argument("--active", type=int, default=8)
    p.set_defaults(func=_cmd_flops)

    p = sub.add_parser("estimate", help="blind sparsity estimation over a dataset")
    p.add_argument("--bank", required=True, help="bank manifest path")
    p.add_argument("--data", required=True, help="dataset file (gen-data output)")
    p.add_argument("--out", help="per-sample CSV path")
    p.set_defaults(func=_cmd_estimate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
