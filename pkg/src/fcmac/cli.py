"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime error,
3 threshold failure under ``eval --assert``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, SimulationInvariantError, TrainingError
from .harness import (ExperimentConfig, MetricsFormatError, emit_plots, eval_assertions, load_config,
                      run_baseline, run_bianchi, run_eval, run_train)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ASSERT = 0, 1, 2, 3
log = logging.getLogger("fcmac")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is needed")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fcmac", description="Wi-Fi backoff simulation and fairness-constrained MAPPO training.")
    ap.add_argument("-v", "--verbose", action="store_true", help="per-episode progress logging")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, checkpoint=False):
        p.add_argument("--config", type=Path, help="INI experiment config")
        p.add_argument("--seed", type=_seeds, help="comma-separated seeds, overrides the config")
        p.add_argument("--out", type=Path, help="output directory, overrides the config")
        if checkpoint:
            p.add_argument("--checkpoint", type=Path, help="trained checkpoint (.npz)")
        return p

    common(sub.add_parser("train", help="train the shared policy"))
    ev = common(sub.add_parser("eval", help="evaluate a checkpoint in mixed networks"), checkpoint=True)
    ev.add_argument("--assert", dest="check", action="store_true",
                    help="exit 3 unless the evaluation thresholds hold")
    common(sub.add_parser("baseline", help="all-legacy BEB runs"))
    common(sub.add_parser("bianchi", help="analytic collision-probability table"))
    pl = sub.add_parser("plot", help="render metrics CSVs as SVG")
    pl.add_argument("inputs", nargs="+", type=Path, help="metrics CSV files")
    pl.add_argument("--out", type=Path, default=Path("plots"))
    return ap


MODE_OF = {"train": "train", "eval": "eval", "baseline": "baseline", "bianchi": "bianchi-table"}


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = replace(cfg, mode=MODE_OF[args.command])
    if args.seed:
        cfg.seeds = args.seed
    if args.out:
        cfg.output_dir = args.out
    if getattr(args, "checkpoint", None):
        cfg.checkpoint_path = args.checkpoint
    return cfg.validate()


def _dispatch(args) -> int:
    if args.command == "plot":
        for path in emit_plots(args.inputs, args.out):
            print(path)
        return EXIT_OK
    cfg = _experiment(args)
    if args.command == "train":
        for path in run_train(cfg):
            print(path)
        return EXIT_OK
    if args.command == "bianchi":
        print(run_bianchi(cfg))
        return EXIT_OK
    report = run_baseline(cfg) if args.command == "baseline" else run_eval(cfg)
    print(Path(cfg.output_dir) / "metrics.csv")
    if report.failures:
        for sid, seed, msg in report.failures:
            print(f"failed: {sid} seed {seed}: {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.command == "eval" and args.check:
        fails = eval_assertions(report.rows)
        for msg in fails:
            print(f"assert: {msg}", file=sys.stderr)
        return EXIT_ASSERT if fails else EXIT_OK
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationInvariantError, TrainingError, MetricsFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
