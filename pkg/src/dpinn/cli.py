"""Command-line entry point.

    dpinn train        --config CFG [--out DIR] [--seed N] [--budget N]
    dpinn evaluate     --config CFG --checkpoint PATH [--out DIR]
    dpinn compare      --config DPINN_CFG --config PINN_CFG [--out DIR] [--seed N] [--budget N]
    dpinn oracle-build --config CFG

``CFG`` is a JSON file or a preset name (``dpinn presets`` lists them).
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config, preset_names
from .errors import InvalidConfiguration, InvalidInput, NumericalFailure, OutOfValidity

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpinn", description="Distributed physics-informed neural network solver")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, many=False):
        if many:
            p.add_argument("--config", action="append", required=True, help="config file or preset (twice)")
        else:
            p.add_argument("--config", required=True, help="config file or preset name")
        p.add_argument("--out", type=Path, help="output directory (default: the config's)")

    def run_flags(p):
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--budget", type=int, help="override the step budget")

    p = sub.add_parser("train", help="train a run and write metrics and a checkpoint")
    common(p)
    run_flags(p)
    p = sub.add_parser("evaluate", help="evaluate a checkpoint against the reference")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p = sub.add_parser("compare", help="train and evaluate a DPINN and a monolithic PINN")
    common(p, many=True)
    run_flags(p)
    p = sub.add_parser("oracle-build", help="precompute cached reference solutions")
    common(p)
    sub.add_parser("presets", help="list bundled presets")
    return ap


def _resolve(spec, args):
    cfg = load_config(spec)
    return cfg.with_overrides(seed=getattr(args, "seed", None), budget=getattr(args, "budget", None))


def _run(args) -> int:
    from . import experiment

    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    if args.command == "compare":
        if len(args.config) != 2:
            raise InvalidConfiguration("compare needs exactly two --config values (DPINN, then PINN)", "config")
        a, b = (_resolve(c, args) for c in args.config)
        summary = experiment.compare_runs(a, b, args.out or Path(a.out).parent / f"compare_{a.name}_{b.name}")
        print(f"dpinn mse {summary['dpinn']['mse']:.6e}")
        print(f"pinn  mse {summary['pinn']['mse']:.6e}")
        print(f"ratio pinn/dpinn {summary['mse_ratio_pinn_over_dpinn']:.6g}")
        return EXIT_OK
    cfg = _resolve(args.config, args)
    if args.command == "train":
        out = args.out or Path(cfg.out)
        result = experiment.train_run(cfg, out)
        last = result.history[-1][1]
        print(f"trained {result.steps} steps, final loss {last.total:.6e}; artifacts in {out}")
    elif args.command == "evaluate":
        if not args.checkpoint.is_file():
            raise InvalidConfiguration(f"checkpoint {args.checkpoint} not found", "checkpoint")
        report = experiment.evaluate_checkpoint(cfg, args.checkpoint, args.out)
        print(json.dumps(report.to_dict(), indent=2, default=experiment._json_default))
    elif args.command == "oracle-build":
        for line in experiment.build_oracle(cfg):
            print(f"built {line}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except (InvalidConfiguration, InvalidInput) as exc:
        where = f" [{exc.field}]" if getattr(exc, "field", None) else ""
        print(f"dpinn: configuration error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, OutOfValidity) as exc:
        print(f"dpinn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
