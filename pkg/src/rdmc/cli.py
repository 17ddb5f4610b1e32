"""Command line entry point: ``rdmc run``, ``rdmc score-check`` and ``rdmc version``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from . import __version__, kernels
from .harness import ConfigError, format_score_table, load_config, run_experiment, score_check
from .ou import DomainError

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdmc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a comparison experiment from a YAML config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out-dir")
    check = sub.add_parser("score-check", help="compare score estimators against an oracle")
    check.add_argument("--config", required=True)
    check.add_argument("--seed", type=int)
    check.add_argument("--out", help="also write the table to this CSV file")
    sub.add_parser("version", help="print version and kernel backend")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "version":
        print(f"rdmc {__version__} (kernels: {kernels.BACKEND})")
        return 0
    try:
        if args.command == "run":
            cfg = load_config(args.config, seed=args.seed, out_dir=args.out_dir)
            record = run_experiment(cfg)
            for name in record.runs:
                row = record.final_row(name)
                mmd = row.get("mmd2")
                extra = f" mmd2={mmd:.4g}" if mmd is not None else ""
                print(f"{name}: step={row['step']} grad_evals={row['grad_evals']}{extra}")
            print(f"wrote {Path(cfg['out_dir']) / 'trace.csv'}")
        else:
            try:
                raw = yaml.safe_load(Path(args.config).read_text())
            except (OSError, yaml.YAMLError) as exc:
                raise ConfigError("config", str(exc)) from None
            table = format_score_table(score_check(raw, seed=args.seed))
            sys.stdout.write(table)
            if args.out:
                Path(args.out).write_text(table)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
