"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import checkpoint
from .config import ConfigError, echo, load_config
from .data import DataError, SyntheticSpec, SYNTHETIC_KINDS, generate_synthetic, load_delimited, load_idx, write_delimited
from .experiment import ExperimentFailed, WORKERS_ENV, run_experiment
from .trainer import accuracy, export_penultimate

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dataset_args(p):
    p.add_argument("dataset", nargs="+",
                   help="one delimited-text file, or an IDX images file and an IDX labels file")
    p.add_argument("--label-column", type=int, default=0)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--header", action="store_true", help="skip the first row")
    p.add_argument("--idx", action="store_true", help="treat the two dataset paths as IDX files")


def build_parser():
    parser = _Parser(prog="stkd", description="Similarity-transfer knowledge distillation experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--workers", type=int, default=None,
                     help=f"seed-parallel worker processes (default: config, then ${WORKERS_ENV}, then 1)")
    run.add_argument("--output-dir", default=None)
    run.add_argument("--echo", action="store_true", help="print the config with defaults and exit")

    ev = sub.add_parser("eval", help="test accuracy of a checkpoint")
    ev.add_argument("checkpoint")
    _dataset_args(ev)

    ex = sub.add_parser("export-activations", help="dump penultimate-layer activations")
    ex.add_argument("checkpoint")
    _dataset_args(ex)
    ex.add_argument("--out", required=True)

    mk = sub.add_parser("make-synthetic", help="write a synthetic dataset as delimited text")
    mk.add_argument("--kind", choices=SYNTHETIC_KINDS, default="gaussian_blobs")
    mk.add_argument("--classes", type=int, default=3)
    mk.add_argument("--per-class", type=int, default=100)
    mk.add_argument("--dim", type=int, default=2)
    mk.add_argument("--sigma", type=float, default=0.1)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--out", required=True)
    return parser


def _load_dataset(args):
    paths = args.dataset
    if args.idx or len(paths) == 2:
        if len(paths) != 2:
            raise UsageError("IDX input needs an images path and a labels path")
        return load_idx(*paths)
    if len(paths) != 1:
        raise UsageError("expected one delimited-text path or two IDX paths")
    return load_delimited(paths[0], args.label_column, args.delimiter, args.header)


def _cmd_run(args):
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    if args.echo:
        sys.stdout.write(echo(cfg))
        return EXIT_OK
    out = args.output_dir or cfg.output_dir
    result = run_experiment(cfg, workers=args.workers, out_dir=out)
    for agg in result.aggregates:
        print(f"{agg['method']:<24} median {agg['medianAccuracy']:.2f}  mean {agg['meanAccuracy']:.2f}  "
              f"seeds {agg['seeds']}")
    print(f"reports written to {os.path.join(out, 'report.jsonl')}")
    return EXIT_OK


def _cmd_eval(args):
    net = checkpoint.load(args.checkpoint)
    ds = _load_dataset(args)
    acc = accuracy(net, ds)
    print(f"accuracy {acc!r} ({int(round(acc * len(ds) / 100))}/{len(ds)})")
    return EXIT_OK


def _cmd_export(args):
    net = checkpoint.load(args.checkpoint)
    ds = _load_dataset(args)
    acts = export_penultimate(net, ds, args.out)
    print(f"wrote {acts.shape[0]} rows x {acts.shape[1] + 1} columns to {args.out}")
    return EXIT_OK


def _cmd_make_synthetic(args):
    spec = SyntheticSpec(args.kind, args.classes, args.per_class, args.dim, args.sigma, args.seed)
    ds = generate_synthetic(spec)
    write_delimited(ds, args.out)
    print(f"wrote {len(ds)} samples to {args.out}")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "eval": _cmd_eval,
    "export-activations": _cmd_export,
    "make-synthetic": _cmd_make_synthetic,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("stkd: error: a subcommand is required")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"stkd {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"stkd {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentFailed, DataError, checkpoint.CheckpointError, OSError, ValueError, RuntimeError) as exc:
        print(f"stkd {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
