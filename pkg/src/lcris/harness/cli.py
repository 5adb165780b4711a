"""Command-line entry point: ``lcris {train,eval,baseline,sweep,report}``.

Exit codes: 0 success, 2 configuration error, 3 constraint violation during
simulation.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from ..lc_dynamics import ConstraintViolation
from . import io
from .config import ConfigError, load_config, parse_seeds
from .runner import (
    MissingCheckpoint,
    per_angle_series,
    run_eval,
    run_sweep,
    run_train,
    summary_table,
)

EXIT_OK, EXIT_CONFIG, EXIT_CONSTRAINT = 0, 2, 3

log = logging.getLogger("lcris")


def _common(p):
    p.add_argument("--config", type=Path, default=None, help="TOML experiment config")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _seeds(p):
    p.add_argument("--seed", type=int, default=None, help="single seed")
    p.add_argument("--seeds", default=None, help="inclusive seed range A..B")


def build_parser():
    parser = argparse.ArgumentParser(prog="lcris", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DDPG phase controller")
    _common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--resume", action="store_true", help="continue from --checkpoint")

    p = sub.add_parser("eval", help="evaluate a controller over seeds")
    _common(p)
    _seeds(p)
    p.add_argument("--controller", choices=["ddpg", "optimal", "realistic"], default="ddpg")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--format", choices=["csv", "plotdata"], default="csv")

    p = sub.add_parser("baseline", help="evaluate the optimal or realistic baseline")
    _common(p)
    _seeds(p)
    p.add_argument("--controller", choices=["optimal", "realistic"], default="realistic")
    p.add_argument("--format", choices=["csv", "plotdata"], default="csv")

    p = sub.add_parser("sweep", help="compare controllers across speeds or weightings")
    _common(p)
    _seeds(p)
    p.add_argument("--axis", choices=["speed", "beta"], required=True)

    p = sub.add_parser("report", help="summarise metric CSVs in a directory")
    p.add_argument("--out", type=Path, required=True, help="directory holding metrics CSVs")
    p.add_argument("--format", choices=["csv", "plotdata"], default="plotdata")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _resolve_seeds(args, cfg):
    if getattr(args, "seeds", None) is not None:
        return parse_seeds(args.seeds)
    if getattr(args, "seed", None) is not None:
        return (args.seed,)
    return cfg.run.seeds


def _emit(rows, out: Path, stem: str, fmt: str, cfg, seeds, extra=None):
    out.mkdir(parents=True, exist_ok=True)
    paths = [io.write_rows(out / f"{stem}.csv", rows)]
    if fmt == "plotdata":
        paths.append(io.write_plotdata(out / f"{stem}.dat", per_angle_series(rows)))
    io.write_manifest(out / f"{stem}.manifest.json", cfg, seeds, extra)
    return paths


def _print_summary(rows):
    for (ctrl, metric), mean in summary_table(rows).items():
        print(f"{ctrl:10s} {metric:20s} {mean:12.4f}")


def cmd_train(args):
    cfg = load_config(args.config)
    out = args.out or Path(cfg.run.output_dir)
    ckpt = args.checkpoint or out / "ddpg.npz"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    rows = [] if cfg.run.evaluate_along_training else None
    result = run_train(cfg, args.seed, ckpt, resume=args.resume,
                       row_sink=rows.append if rows is not None else None)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "reward_curve.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["episode", "mean_reward"])
        for k, r in enumerate(result.curve):
            w.writerow([k, repr(r)])
    if rows:
        _emit(rows, out, "train_metrics", "csv", cfg, (cfg.run.train_seed,))
    print(f"checkpoint: {ckpt}")


def cmd_eval(args, controller=None):
    cfg = load_config(args.config)
    controller = controller or args.controller
    seeds = _resolve_seeds(args, cfg)
    rows = run_eval(cfg, controller, seeds, getattr(args, "checkpoint", None))
    out = args.out or Path(cfg.run.output_dir)
    _emit(rows, out, f"{controller}_metrics", args.format, cfg, seeds,
          {"controller": controller})
    _print_summary(rows)


def cmd_sweep(args):
    cfg = load_config(args.config)
    out = args.out or Path(cfg.run.output_dir)
    seeds = _resolve_seeds(args, cfg)
    table, rows = run_sweep(cfg, args.axis, out, seeds=seeds)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"sweep_{args.axis}.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, ["axis", "value", "controller", "metric", "mean"],
                           lineterminator="\n")
        w.writeheader()
        for rec in table:
            w.writerow({**rec, "mean": repr(rec["mean"])})
    io.write_manifest(out / f"sweep_{args.axis}.manifest.json", cfg, seeds, {"axis": args.axis})
    for rec in table:
        print(f"{rec['value']:>8s} {rec['controller']:10s} {rec['metric']:20s} {rec['mean']:12.4f}")


def cmd_report(args):
    files = sorted(args.out.glob("*_metrics.csv"))
    if not files:
        raise ConfigError(f"no *_metrics.csv files in {args.out}")
    rows = [r for f in files for r in io.read_rows(f)]
    _print_summary(rows)
    if args.format == "plotdata":
        path = io.write_plotdata(args.out / "report.dat", per_angle_series(rows))
        print(f"plot data: {path}")
    summary = {f"{c}:{m}": v for (c, m), v in summary_table(rows).items()}
    (args.out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            cmd_train(args)
        elif args.command == "eval":
            cmd_eval(args)
        elif args.command == "baseline":
            cmd_eval(args, args.controller)
        elif args.command == "sweep":
            cmd_sweep(args)
        else:
            cmd_report(args)
    except (ConfigError, MissingCheckpoint) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstraintViolation as e:
        print(f"constraint violation: {e}", file=sys.stderr)
        return EXIT_CONSTRAINT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
