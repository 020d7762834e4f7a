#!/usr/bin/env python3
"""Wall time of run_csopt on square instances up to 1000 users x 1000 tasks."""
import argparse
import sys

from crowdchain.experiments import bench_timing, money


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="100,200,500,1000")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args(argv)
    sizes = [(n, n) for n in map(int, args.sizes.split(","))]
    print("n_users,n_tasks,seed,t_csopt_s,total_payment")
    for seed in range(args.seeds):
        for row in bench_timing(sizes, seed=seed):
            print(f"{row.n_users},{row.n_tasks},{row.seed},{row.t_csopt:.4f},{money(row.total_payment)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
