"""Command line entry point: ``psdiffusion <command> --config cfg.json``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .distributions import Streams
from .errors import ConfigError, DomainError
from .fluid import fluid_solve
from .harness import ExperimentConfig, run_suites, write_reports
from .measure import FiniteMeasure, lift
from .simulation import parse_initial, run

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psdiffusion", description="Heavy-traffic processor-sharing experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate one replication per r and export the raw paths",
        "fluid": "solve the fluid model from the configured start and compare with shifted fluid views",
        "collapse": "state space collapse suite",
        "steady": "steady-state goodness-of-fit suite",
        "validate": "assumption report for the configured family",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="JSON experiment config")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.add_argument("--workers", type=int, help="worker processes")
    return p


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.workers is not None:
        changes["workers"] = args.workers
    try:
        return replace(cfg, **changes) if changes else cfg
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _initial_measure(cfg: ExperimentConfig) -> FiniteMeasure:
    kind, val = parse_initial(cfg.initial)
    if kind == "atoms":
        return FiniteMeasure.atomic(val)
    if kind == "manifold":
        return lift(val, cfg.family().service)
    return FiniteMeasure()


def cmd_simulate(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fam = cfg.family()
    files = []
    for r in cfg.r_values:
        grid = np.linspace(0.0, cfg.horizon, cfg.grid_points) * r * r
        path = run(fam, r, cfg.horizon * r * r, grid, Streams(cfg.seed, r, 0), cfg.initial, max_events=cfg.max_events)
        stem = out / f"path_r{r:g}"
        main, atoms = path.to_csv(stem)
        path.save(stem.with_suffix(".npz"))
        files += [main.name, atoms.name, stem.with_suffix(".npz").name]
    summary = {"config": cfg.echo(), "files": files, "csv_columns": ["t", "Z", "W", "S"], "passed": True}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_PASS


def cmd_fluid(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fam = cfg.family()
    fluid_solve(_initial_measure(cfg), fam.alpha, fam.service, cfg.fluid_horizon, cfg.fluid_step).to_csv(
        out / "fluid_path.csv"
    )
    reports = run_suites(cfg, ["fluid"])
    write_reports(cfg, reports, out)
    return EXIT_PASS if reports["fluid"].passed else EXIT_FAIL


def cmd_suite(cfg: ExperimentConfig, name: str) -> int:
    reports = run_suites(cfg, [name])
    write_reports(cfg, reports)
    return EXIT_PASS if reports[name].passed else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "fluid":
            return cmd_fluid(cfg)
        return cmd_suite(cfg, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
