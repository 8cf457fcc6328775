"""Command-line entry point: ``raekit <command> [--config FILE] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import ConfigError, load_config
from .mediator import parse_address

COMMANDS = ("gen-data", "prepare", "train-rae", "transform", "train-classifier", "evaluate", "attack", "serve")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config merged over the bundled defaults")
    common.add_argument("--out", help="output directory (overrides output_dir in the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="raekit", description="Replacement-autoencoder privacy toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("gen-data", parents=[common], help="write the synthetic benchmark CSV(s)")
    sub.add_parser("prepare", parents=[common], help="window, split and archive the dataset")
    sub.add_parser("train-rae", parents=[common], help="train the replacement autoencoder")
    p = sub.add_parser("transform", parents=[common], help="transform a window archive")
    p.add_argument("--input", help="archive to transform (default: the test split)")
    p.add_argument("--output", help="destination archive")
    sub.add_parser("train-classifier", parents=[common], help="train the stand-in third-party classifier")
    p = sub.add_parser("evaluate", parents=[common], help="write the OF1/TF1 report and confusion matrices")
    p.add_argument("--no-figures", action="store_true")
    p = sub.add_parser("attack", parents=[common], help="run the GAN detectability attacks")
    p.add_argument("--no-figures", action="store_true")
    p = sub.add_parser("serve", parents=[common], help="run the streaming mediator")
    p.add_argument("--model", help="model file (default: rae.model in the output directory)")
    p.add_argument("--listen", required=True, help="host:port to listen on")
    return parser


def run(command, cfg, args):
    if command == "gen-data":
        paths = pipeline.gen_data(cfg)
    elif command == "prepare":
        paths = pipeline.prepare(cfg)
    elif command == "train-rae":
        paths = [pipeline.train_rae_stage(cfg)]
    elif command == "transform":
        paths = [pipeline.transform_stage(cfg, args.input, args.output)]
    elif command == "train-classifier":
        paths = [pipeline.train_classifier_stage(cfg)]
    elif command == "evaluate":
        report, paths = pipeline.evaluate_stage(cfg, figures=not args.no_figures)
        print(report.to_text())
        paths = list(paths.values())
    elif command == "attack":
        reports, paths = pipeline.attack_stage(cfg, figures=not args.no_figures)
        for name, rep in reports.items():
            print(f"[{name}]")
            print(rep.to_csv())
        paths = list(paths.values())
    elif command == "serve":
        from .mediator import serve
        from .rae import load_model

        serve(load_model(args.model or pipeline.out_dir(cfg) / pipeline.RAE_MODEL), parse_address(args.listen))
        paths = []
    else:  # pragma: no cover - argparse rejects unknown commands
        raise ValueError(command)
    for path in paths:
        print(f"wrote {path}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {"output_dir": args.out} if args.out else None
        cfg = load_config(args.config, overrides)
        if args.command == "serve":
            parse_address(args.listen)
    except (ConfigError, ValueError) as exc:
        print(f"raekit: usage error: {exc}", file=sys.stderr)
        return 2
    try:
        run(args.command, cfg, args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"raekit: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
