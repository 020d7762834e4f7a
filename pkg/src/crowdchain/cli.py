"""Command line entry point: ``crowdchain <group> <command> [flags]``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from .auction import AuctionError, AuctionInstance
from .chain import TimingParams
from .experiments import (
    Scenario,
    SweepSpec,
    aggregate,
    bench_timing,
    emit_report,
    generate_scenario,
    money,
    rows_to_csv,
    run_experiment,
    sim_delay,
)
from .gssum import SCORE_RULE, SCORES


def int_list(text: str):
    return [int(x) for x in str(text).split(",") if x]


def _scenario_flags(p, users="100", tasks="50"):
    p.add_argument("--users", default=users, help="user count (comma list for sweeps)")
    p.add_argument("--tasks", default=tasks, help="task count (comma list for sweeps)")
    p.add_argument("--r", default=None, help="repeat factor override (comma list for sweeps)")
    p.add_argument("--alpha", type=Fraction, default=Fraction(1, 2))
    p.add_argument("--beta", type=Fraction, default=Fraction(1, 2))
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--radius", type=float, default=15)
    p.add_argument("--cost-min", type=Fraction, default=Fraction(50))
    p.add_argument("--cost-max", type=Fraction, default=Fraction(100))
    p.add_argument("--seed", type=int, default=0)


def _timing_flags(p):
    p.add_argument("--t-b", type=Fraction, default=Fraction(1))
    p.add_argument("--t-ann", type=Fraction, default=Fraction(2))
    p.add_argument("--t-bidding", type=Fraction, default=Fraction(5))
    p.add_argument("--t-csopt", type=Fraction, default=None, help="default: measured")
    p.add_argument("--t-task", type=Fraction, default=Fraction(10))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crowdchain")
    groups = ap.add_subparsers(dest="group", required=True)

    auction = groups.add_parser("auction").add_subparsers(dest="cmd", required=True)
    run = auction.add_parser("run", help="run one auction on a generated or saved instance")
    _scenario_flags(run)
    run.add_argument("--instance", type=Path, help="JSON instance file instead of a generated one")
    run.add_argument("--algo", choices=["csopt", "gssum", "both"], default="csopt")
    run.add_argument("--gssum-score", choices=SCORES, default=SCORE_RULE)
    run.add_argument("--out", type=Path)
    run.add_argument("--format", choices=["csv", "json"], default="json")

    exp = groups.add_parser("experiment").add_subparsers(dest="cmd", required=True)
    sw = exp.add_parser("sweep", help="cost sweep over users x tasks x r x seeds")
    _scenario_flags(sw, users="100,200,300,400,500,600,700,800,900,1000", tasks="200")
    sw.add_argument("--seeds", type=int, default=10)
    sw.add_argument("--algo", choices=["csopt", "gssum", "both"], default="both")
    sw.add_argument("--gssum-score", choices=SCORES, default=SCORE_RULE)
    sw.add_argument("--timing", action="store_true", help="fill runtime_s (makes output non-reproducible)")
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--out", type=Path)
    sw.add_argument("--format", choices=["csv", "json"], default="csv")

    b = groups.add_parser("bench", help="wall time of CSOPT across sizes")
    b.add_argument("--users", default="10,100,500,1000")
    b.add_argument("--tasks", default="10,100,500,1000")
    b.add_argument("--radius", type=float, default=15)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", type=Path)

    chain = groups.add_parser("chain").add_subparsers(dest="cmd", required=True)
    demo = chain.add_parser("demo", help="scripted request/auction/payment flow on the simulated ledger")
    _scenario_flags(demo, users="40", tasks="10")
    _timing_flags(demo)
    demo.add_argument("--out", type=Path, help="write the transaction trace (JSON lines)")

    v = groups.add_parser("verify", help="truthfulness property suite")
    v.add_argument("--instances", type=int, default=200)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", type=Path)
    v.add_argument("--format", choices=["csv", "json"], default="json")
    return ap


def _algos(choice):
    return ["csopt", "gssum"] if choice == "both" else [choice]


def _single_r(args):
    return int(args.r) if args.r is not None else None


def _scenario(args) -> Scenario:
    r = _single_r(args)
    return Scenario(int(args.users), int(args.tasks), args.grid, args.radius, args.cost_min, args.cost_max,
                    args.alpha, args.beta, r, args.seed)


def cmd_auction_run(args) -> int:
    from .experiments import run_algorithm
    if args.instance:
        inst = AuctionInstance.from_json(args.instance.read_text())
    else:
        inst = generate_scenario(_scenario(args), redraw=True)
    result = {}
    for a in _algos(args.algo):
        t0 = time.perf_counter()
        out = run_algorithm(a, inst, args.gssum_score)
        dt = time.perf_counter() - t0
        result[a] = {
            "r": out.r,
            "total_payment": money(out.total_payment),
            "total_cost": money(out.total_cost),
            "winners": len(out.winners()),
            "runtime_s": round(dt, 6),
            "payments": {str(u): money(p) for u, p in sorted(out.payments.items()) if p},
            "meta": out.meta,
        }
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_sweep(args) -> int:
    spec = SweepSpec(users=int_list(args.users), tasks=int_list(args.tasks),
                     rs=int_list(args.r) if args.r else [1], seeds=list(range(args.seed, args.seed + args.seeds)),
                     algorithms=_algos(args.algo), grid_size=args.grid, bid_radius=args.radius,
                     c_min=args.cost_min, c_max=args.cost_max, timing=args.timing,
                     gssum_score=args.gssum_score)
    rows = run_experiment(spec, workers=args.workers)
    config = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in vars(spec).items()}
    if args.out:
        emit_report(rows, args.out, args.format, config)
    else:
        sys.stdout.write(rows_to_csv(rows))
    for a in aggregate(rows):
        print(f"{a.algorithm:6s} users={a.n_users:5d} tasks={a.n_tasks:5d} r={a.r} "
              f"mean={a.mean:12.2f} se={a.stderr:9.2f} n={a.n}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    sizes = [(n, m) for n in int_list(args.users) for m in int_list(args.tasks)]
    rows = bench_timing(sizes, seed=args.seed, radius=args.radius)
    lines = ["n_users,n_tasks,seed,t_csopt_s,total_payment"]
    lines += [f"{r.n_users},{r.n_tasks},{r.seed},{r.t_csopt:.6f},{money(r.total_payment)}" for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_chain_demo(args) -> int:
    from .chain import run_scripted
    inst = generate_scenario(_scenario(args), redraw=True)
    timing = TimingParams(args.t_b, args.t_ann, args.t_bidding, args.t_csopt or 0, args.t_task)
    rep = sim_delay(timing, inst, seed=args.seed, measure=args.t_csopt is None)
    run = run_scripted(inst, rep.timing, seed=args.seed)
    print(json.dumps({
        "formula_s": float(rep.formula),
        "simulated_s": None if rep.simulated is None else float(rep.simulated),
        "within_one_block": rep.within_one_block,
        "t_csopt_s": float(rep.timing.t_csopt),
        "blocks": run.chain.height,
        "auction_status": run.auction.status,
        "winners": len(run.auction.mup.allocation) if run.auction.mup else 0,
        "refunded_csp": run.rr.refunded,
    }, indent=2))
    if args.out:
        args.out.write_text(run.chain.trace_lines())
    return 0 if rep.within_one_block else 1


def cmd_verify(args) -> int:
    from .truthfulness import run_suite
    reports = run_suite(args.instances, args.seed)
    for rep in reports:
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.name} trials={rep.trials} skipped={rep.skipped}")
    if args.out:
        rows = [rep.as_row() for rep in reports]
        if args.format == "json":
            args.out.write_text(json.dumps(rows, indent=2, default=str) + "\n")
        else:
            import csv
            with args.out.open("w", newline="") as fh:
                w = csv.DictWriter(fh, ["property", "passed", "trials", "skipped", "worst_margin", "counterexample"])
                w.writeheader()
                for row in rows:
                    w.writerow(row | {"counterexample": json.dumps(row["counterexample"])})
    return 0 if all(rep.passed for rep in reports) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        ("auction", "run"): cmd_auction_run,
        ("experiment", "sweep"): cmd_sweep,
        ("bench", None): cmd_bench,
        ("chain", "demo"): cmd_chain_demo,
        ("verify", None): cmd_verify,
    }
    try:
        return handlers[args.group, getattr(args, "cmd", None)](args)
    except AuctionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
