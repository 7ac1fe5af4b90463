"""Command-line entry point.

Subcommands: ingest, signals, estimate, grid, oos, robustness, simulate,
report, run. Exit codes: 0 success, 1 validation, 2 computation, 3 I/O.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import pipeline
from .errors import ComputationError, DataIOError, PmvolError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_COMPUTATION = 2
EXIT_IO = 3

_STAGES = {
    "simulate": pipeline.stage_simulate,
    "ingest": pipeline.stage_ingest,
    "signals": pipeline.stage_signals,
    "estimate": pipeline.stage_estimate,
    "grid": pipeline.stage_grid,
    "oos": pipeline.stage_oos,
    "robustness": pipeline.stage_robustness,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmvol",
        description="Prediction-market repricing signals for crypto volatility forecasting")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*_STAGES.keys(), "report", "run"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", default=None, help="artifact directory (default: config out_dir)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def _override_seed(cfg: pipeline.RunConfig, seed: int) -> pipeline.RunConfig:
    syn = cfg.synthetic
    if syn is not None:
        syn = dataclasses.replace(syn, seed=seed)
    return dataclasses.replace(cfg, seed=seed, synthetic=syn)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = args.command
    try:
        cfg = pipeline.load_config(args.config)
        if args.seed is not None:
            cfg = _override_seed(cfg, args.seed)
        out = Path(args.out) if args.out else Path(cfg.out_dir)
        if stage == "run":
            pipeline.run(cfg, out)
            print(f"run complete: {out / pipeline.MANIFEST_NAME}")
        elif stage == "report":
            print(pipeline.stage_report(cfg, out), end="")
        else:
            out.mkdir(parents=True, exist_ok=True)
            _STAGES[stage](cfg, out)
            print(f"{stage} complete: {out}")
    except ValidationError as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ComputationError as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION
    except (DataIOError, OSError) as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_IO
    except PmvolError as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
