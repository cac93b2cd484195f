"""Command-line front end: ``ibclab <experiment> --config run.yaml``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import EXPERIMENTS, SCHEMA, ExperimentConfig, build_matrix, export_matrix, run


def _config(args, experiment: str) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig(experiment=experiment)
    data = cfg.to_dict()
    data["experiment"] = experiment
    for key in ("out", "jobs", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    return ExperimentConfig.from_dict(data)


def _print_report(rep):
    for c in rep.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: measured={c.measured} oracle={c.oracle} "
              f"tol={c.tolerance}")
    for f in rep.files:
        print(f"wrote {f}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ibclab", description="Fixed-source boson model: experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--seed", type=int, help="random seed")
    p = sub.add_parser("export-matrix", help="assemble the configured Hamiltonian and write its triplets")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--grid", type=int, default=0, help="index into the grid ladder")
    p.add_argument("path", help="output file")
    sub.add_parser("print-schema", help="show the config keys with defaults")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "print-schema":
        print(SCHEMA, end="")
        return 0
    if args.command == "export-matrix":
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        A = build_matrix(cfg, cfg.grid_ladder()[args.grid])
        export_matrix(A, args.path)
        print(f"wrote {args.path} (dim {A.dim}, nnz {A.nnz})")
        return 0
    cfg = _config(args, args.command)
    rep = run(cfg, cfg.out)
    _print_report(rep)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
