#!/usr/bin/env python3
"""Total payment of CSOPT and GSSUM as the user population grows.

Writes one CSV row per (algorithm, n_users, seed) plus a metadata sidecar,
then prints the per-size means and the 1000 x 1000 payment ratio.
"""
import argparse
import sys
from fractions import Fraction

from crowdchain.auction import run_csopt
from crowdchain.experiments import (
    Scenario,
    SweepSpec,
    aggregate,
    emit_report,
    generate_scenario,
    run_experiment,
    trend_violations,
)
from crowdchain.gssum import SCORES, run_gssum


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/payment_sweep.csv")
    ap.add_argument("--tasks", type=int, default=200)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--gssum-score", choices=SCORES, default="set_cover")
    ap.add_argument("--skip-ratio", action="store_true", help="skip the 1000 x 1000 ratio runs")
    args = ap.parse_args(argv)

    spec = SweepSpec(users=tuple(range(100, 1001, 100)), tasks=(args.tasks,), seeds=tuple(range(args.seeds)),
                     gssum_score=args.gssum_score)
    rows = run_experiment(spec, workers=args.workers)
    config = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in vars(spec).items()}
    for p in emit_report(rows, args.out, "csv", config):
        print(f"wrote {p}")

    aggs = aggregate(rows)
    print(f"{'algo':6s} {'users':>5s} {'mean':>10s} {'se':>8s}")
    for a in aggs:
        print(f"{a.algorithm:6s} {a.n_users:5d} {a.mean:10.2f} {a.stderr:8.2f}")
    for algo, direction in (("csopt", "non_increasing"), ("gssum", "non_decreasing")):
        bad = trend_violations(aggs, algo, direction)
        print(f"{algo} {direction}: {'holds' if not bad else f'{len(bad)} violation(s)'}")

    if not args.skip_ratio:
        c = g = 0.0
        for seed in range(args.seeds):
            inst = generate_scenario(Scenario(1000, 1000, r=1, seed=seed), redraw=True)
            c += float(run_csopt(inst).total_payment)
            g += float(run_gssum(inst, score=args.gssum_score).total_payment)
        print(f"1000 users x 1000 tasks: GSSUM/CSOPT = {g / c:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
