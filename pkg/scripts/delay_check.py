#!/usr/bin/env python3
"""Compare the simulated request-to-data time with the closed-form delay
over random timing configurations."""
import argparse
import random
import sys
from fractions import Fraction

from crowdchain.chain import TimingParams
from crowdchain.experiments import sim_delay


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = random.Random(args.seed)
    print("t_b,t_ann,t_bidding,t_csopt,t_task,formula,simulated,gap_in_blocks")
    worst = 0.0
    for k in range(args.configs):
        tb = Fraction(rng.randint(1, 30), rng.randint(1, 10))
        timing = TimingParams(tb, *(Fraction(rng.randint(0, 120), rng.randint(1, 8)) for _ in range(4)))
        rep = sim_delay(timing, seed=k)
        gap = float(abs(rep.simulated - rep.formula) / tb)
        worst = max(worst, gap)
        vals = [timing.t_block, timing.t_ann, timing.t_bidding, timing.t_csopt, timing.t_task,
                rep.formula, rep.simulated]
        print(",".join(f"{float(v):.3f}" for v in vals) + f",{gap:.3f}")
    print(f"worst gap: {worst:.3f} blocks", file=sys.stderr)
    return 0 if worst <= 1 else 1


if __name__ == "__main__":
    sys.exit(main())
