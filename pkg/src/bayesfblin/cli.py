"""Command-line entry point: ``bayesfblin {run,optimize-hypers,metrics,batch,reproduce}``."""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .errors import BayesFBLinError

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = _LEVELS.get(os.environ.get("BAYESFBLIN_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load(path: str, args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(path)
    if getattr(args, "controller", None):
        cfg = replace(cfg, controller=args.controller)
    if getattr(args, "gain", None) is not None:
        cfg = replace(cfg, gain=args.gain)
    return cfg


def _summary(m: dict) -> str:
    return (f"{m['run']}: energy={m['energy']:.4g} error={m['error']:.4g} "
            f"data=({m['n_data_a']},{m['n_data_b']}) converged={m['converged']}")


def cmd_run(args) -> int:
    cfg = _load(args.config, args)
    rec = harness.run(cfg, model_in=args.model_in, model_out=args.model_out)
    table = harness.report([rec], args.out_dir)
    print(_summary(table[0]))
    if not rec.complete:
        return EXIT_ERROR
    return EXIT_OK if table[0]["converged"] else EXIT_NOT_CONVERGED


def cmd_optimize(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config)
    out = harness.optimize_mode(cfg, args.model_in)
    out.save(args.config_out)
    print(f"kernel_a={out.kernel_a.to_dict()} kernel_b={out.kernel_b.to_dict()}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    rows = harness.read_trajectory(args.run)
    m = harness.metrics_from_rows(rows, args.xi)
    print(json.dumps(m, sort_keys=True))
    return EXIT_OK


def cmd_batch(args) -> int:
    paths = sorted(glob.glob(args.configs))
    if not paths:
        print(f"no configs match {args.configs!r}", file=sys.stderr)
        return EXIT_ERROR
    records = [harness.run(_load(p, args)) for p in paths]
    table = harness.report(records, args.out_dir)
    for m in table:
        print(_summary(m))
    if not all(r.complete for r in records):
        return EXIT_ERROR
    return EXIT_OK if all(m["converged"] for m in table) else EXIT_NOT_CONVERGED


def cmd_reproduce(args) -> int:
    table = harness.reproduce(args.exp_dir, args.out_dir, args.names)
    for m in table:
        print(_summary(m))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayesfblin", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--model-in")
    r.add_argument("--model-out")
    r.add_argument("--out-dir", required=True)
    r.add_argument("--controller", choices=["sp", "p"])
    r.add_argument("--gain", type=float)
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("optimize-hypers", help="fit kernels to pilot data by marginal likelihood")
    o.add_argument("--config", required=True)
    o.add_argument("--model-in", required=True)
    o.add_argument("--config-out", required=True)
    o.set_defaults(func=cmd_optimize)

    m = sub.add_parser("metrics", help="energy and squared error of a trajectory CSV")
    m.add_argument("--run", required=True)
    m.add_argument("--xi", type=float, nargs="+", default=[3.141592653589793, 0.0])
    m.set_defaults(func=cmd_metrics)

    b = sub.add_parser("batch", help="run every config matching a glob")
    b.add_argument("--configs", required=True)
    b.add_argument("--out-dir", default="runs")
    b.add_argument("--controller", choices=["sp", "p"])
    b.add_argument("--gain", type=float)
    b.set_defaults(func=cmd_batch)

    t = sub.add_parser("reproduce", help="P1, P100, SP1 and SP2 for each experiment")
    t.add_argument("--exp-dir", default="experiments")
    t.add_argument("--out-dir", default="runs")
    t.add_argument("--names", nargs="+", default=["exp1", "exp2", "exp3"])
    t.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BayesFBLinError, OSError, ValueError, KeyError) as exc:
        logging.getLogger("bayesfblin").error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
