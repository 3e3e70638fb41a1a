"""Run every shipped configuration and print one summary line each.

    python3 scripts/run_all.py --out results [--only classical] [--jobs 2]

Outputs land in <out>/<config stem>/{errors.csv,report.json}; the point-mass
vs coherent-state Husimi check is written to <out>/coherent_husimi.json.
"""
import argparse
import json
import time
from pathlib import Path

from splitlab.harness.config import load
from splitlab.harness.experiments import coherent_husimi_distance, run_experiment
from splitlab.harness.report import emit_report

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", default="", help="substring filter on config file names")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    ok = True
    for path in sorted(CONFIGS.glob("*.toml")):
        if args.only not in path.stem:
            continue
        cfg = load(path)
        t0 = time.perf_counter()
        res = run_experiment(cfg, jobs=args.jobs)
        emit_report(res.records, res.fits, res.bounds, out / path.stem, cfg.to_dict(), cfg.seed,
                    res.summary, res.diagnostics)
        slopes = ", ".join(f"{f.metric} slope {f.slope:.3f}" for f in res.fits)
        ok &= res.all_bounds_satisfied
        print(f"{path.stem}: bounds {'ok' if res.all_bounds_satisfied else 'VIOLATED'}; {slopes}; "
              f"{time.perf_counter() - t0:.0f}s", flush=True)
    if not args.only or args.only in "coherent_husimi":
        rows = [coherent_husimi_distance(h) for h in (1.0, 0.1, 0.01)]
        out.mkdir(parents=True, exist_ok=True)
        (out / "coherent_husimi.json").write_text(json.dumps(rows, indent=2) + "\n")
        for r in rows:
            print(f"coherent_husimi hbar {r['hbar']:g}: W2 {r['w2']:.5f} (exact {r['exact']:.5f}, "
                  f"allowed {r['bound']:.4f})")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
