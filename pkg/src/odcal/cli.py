"""Command-line entry point: ``odcal {gen-network,gen-gt,calibrate,report}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .experiment import ALGORITHMS, ExperimentConfig, cmd_calibrate, cmd_gen_gt, cmd_gen_network, cmd_report
from .generator import GeneratorConfig
from .network import load_network, validate_network


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="odcal", description="Calibrate OD demands from segment speed data.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, help="override master_seed (generator seed for gen-network)")
        sp.add_argument("--output-dir", type=Path, help="override output_dir")

    g = sub.add_parser("gen-network", help="generate a synthetic network file")
    common(g)
    g.add_argument("--paper-scale", action="store_true", help="62 OD pairs, 3 routes each")
    g.add_argument("--output", type=Path, help="network file to write (default: config network_path)")

    common(sub.add_parser("gen-gt", help="generate GT demand and GT speed/count table"))

    c = sub.add_parser("calibrate", help="run calibrations")
    common(c)
    c.add_argument("--algorithm", choices=ALGORITHMS, help="default: every algorithm in the config")
    c.add_argument("--threshold", type=float, help="default: every threshold in the config")

    common(sub.add_parser("report", help="write the comparison table and scatter files"))
    return p


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None and args.command != "gen-network":
        cfg.master_seed = args.seed
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        if args.command == "gen-network":
            gen = GeneratorConfig.paper_scale() if args.paper_scale else cfg.generator
            if args.seed is not None:
                gen = dataclasses.replace(gen, seed=args.seed)
            path = args.output or cfg.network_path
            cmd_gen_network(gen, path)
            diags = validate_network(load_network(path))
            if diags:
                raise ValueError(f"generated network failed validation: {diags[0]}")
        elif args.command == "gen-gt":
            cmd_gen_gt(cfg)
        elif args.command == "calibrate":
            algorithms = [args.algorithm] if args.algorithm else sorted(cfg.algorithms)
            thresholds = [args.threshold] if args.threshold is not None else list(cfg.thresholds)
            for algorithm in algorithms:
                for threshold in thresholds:
                    cmd_calibrate(cfg, algorithm, threshold)
        elif args.command == "report":
            cmd_report(cfg)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"odcal {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
