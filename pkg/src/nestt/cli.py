"""Command-line entry points: run experiments, summarize CSVs, generate
instances.  Exit codes: 0 success, 2 config error, 3 numerical failure."""

from __future__ import annotations

import argparse
import glob
import os
import sys

import numpy as np

from .errors import ConfigError, ConvergenceError, NesttError
from .harness import (
    parse_config_file,
    parse_problem_section,
    run_experiment,
    summarize,
    write_summary_csv,
)
from .problem import RegressionConfig, generate_regression_instance, save_instance
from .records import parse_run_csv


def _cmd_run(args) -> int:
    cfg = parse_config_file(args.config)
    records = run_experiment(cfg)
    text, rows = summarize(records)
    write_summary_csv(rows, os.path.join(cfg.output_dir, "summary.csv"))
    print(f"wrote {len(records)} runs to {cfg.output_dir}")
    print(text)
    return 0


def _cmd_summarize(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.input, "*.csv")))
    paths = [
        p
        for p in paths
        if os.path.basename(p) not in ("combined.csv", "summary.csv")
    ]
    if not paths:
        raise ConfigError(f"no run CSVs found under {args.input!r}")
    records = [parse_run_csv(p) for p in paths]
    text, rows = summarize(records)
    write_summary_csv(rows, os.path.join(args.input, "summary.csv"))
    print(text)
    return 0


def _cmd_gen_instance(args) -> int:
    with open(args.config) as fh:
        text = fh.read()
    kv = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, _, value = stripped.partition("=")
        kv[key.strip()] = value.strip()
    problem_cfg = parse_problem_section(kv)
    if not isinstance(problem_cfg, RegressionConfig):
        raise ConfigError("gen-instance needs generator keys, not problem.instance")
    problem, truth = generate_regression_instance(problem_cfg)
    save_instance(problem, args.out)
    print(
        f"wrote instance d={problem.dim} N={problem.n_components} "
        f"||truth||_1={np.abs(truth).sum():.6g} to {args.out}"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="nestt",
        description="Stochastic primal-dual splitting experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_sum = sub.add_parser("summarize", help="summarize a directory of run CSVs")
    p_sum.add_argument("--input", required=True)
    p_sum.set_defaults(func=_cmd_summarize)

    p_gen = sub.add_parser("gen-instance", help="generate and save an instance")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_gen_instance)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except NesttError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
