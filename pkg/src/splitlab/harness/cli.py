"""Command line: ``splitlab run|validate|constants <config.toml>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .. import bounds as bnd
from ..potentials import make_potential
from . import config as cfgmod
from .experiments import run_experiment
from .report import emit_report, jsonable

log = logging.getLogger("splitlab")


def _parser():
    p = argparse.ArgumentParser(prog="splitlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment and write errors.csv + report.json")
    run.add_argument("config")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    val = sub.add_parser("validate", help="check a config file and exit")
    val.add_argument("config")
    con = sub.add_parser("constants", help="print the bound constants as JSON")
    con.add_argument("config")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.load(args.config)
    except (cfgmod.ConfigError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"{args.config}: ok ({cfg.experiment}, {cfg.scheme})")
        return 0
    if args.command == "constants":
        V = make_potential(cfg.potential, cfg.d)
        br = bnd.bound_report(V, cfg.T, max(cfg.dt_list), cfg.initial, cfg.d)
        print(json.dumps(jsonable(br), indent=2, sort_keys=True))
        return 0
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    log.info("running %s (%s, %s)", cfg.name, cfg.experiment, cfg.scheme)
    res = run_experiment(cfg, jobs=args.jobs)
    doc = emit_report(res.records, res.fits, res.bounds, args.out, cfg.to_dict(), cfg.seed,
                      res.summary, res.diagnostics)
    for f in res.fits:
        log.info("fit %s: slope %.4f (r^2 %.4f, %d points)", f.metric, f.slope, f.r_squared,
                 f.points_used)
    bad = doc["records_summary"]["violations"]
    if bad:
        log.error("%d bound check(s) failed", bad)
        return 1
    log.info("all %d bound checks passed", doc["records_summary"]["with_bound"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
