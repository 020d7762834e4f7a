"""Brute-force and Monte Carlo checks of the mechanism's incentive claims.

The optimum is found by enumeration and the payment integral by evaluating
``alloc_rule`` alone, so neither depends on how ``payment_rule`` computes
its surplus.  Truthfulness checks drive ``run_csopt`` with perturbed bids.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .auction import (
    AuctionError,
    AuctionInstance,
    Bid,
    alloc_rule,
    allocation_cost,
    as_rational,
    run_csopt,
    task_copies,
)

MAX_CANDIDATES = 10**6


class SearchSpaceTooLarge(RuntimeError):
    pass


class ZeroDensity(ValueError):
    pass


@dataclass
class PropertyReport:
    name: str
    passed: bool
    trials: int = 0
    skipped: int = 0
    worst_margin: Optional[Fraction] = None
    counterexample: Optional[dict] = None

    def __post_init__(self):
        if self.passed and self.counterexample is not None:
            raise ValueError("a passing report cannot carry a counterexample")

    def as_row(self) -> dict:
        return {
            "property": self.name,
            "passed": self.passed,
            "trials": self.trials,
            "skipped": self.skipped,
            "worst_margin": None if self.worst_margin is None else str(self.worst_margin),
            "counterexample": self.counterexample,
        }


# ---------------------------------------------------------------------------
# allocative efficiency by enumeration
# ---------------------------------------------------------------------------

def brute_force_ae(inst: AuctionInstance, r: Optional[int] = None,
                   limit: int = MAX_CANDIDATES) -> Tuple[Fraction, Dict[int, frozenset]]:
    """Exact minimum-cost assignment by enumerating every choice of ``r``
    distinct interested users per task.

    Using exactly ``r`` users per task loses nothing: costs are nonnegative,
    so adding users to a task never lowers the total.  Capacities are
    respected.  Returns ``(cost, {user_id: frozenset(task_ids)})``.
    """
    r = inst.repeat() if r is None else r
    cost = {b.user_id: b.cost_per_task for b in inst.bids}
    cap = {b.user_id: b.capacity for b in inst.bids}
    tids = sorted(inst.task_ids)
    options = []
    for t in tids:
        users = sorted(b.user_id for b in inst.bids if t in b.task_ids)
        options.append(list(itertools.combinations(users, r)))
    size = math.prod(len(o) for o in options)
    if size > limit:
        raise SearchSpaceTooLarge(f"{size} candidate assignments > {limit}")
    if size == 0:
        raise AuctionError("no feasible assignment")

    best: Optional[Fraction] = None
    best_choice = None
    for choice in itertools.product(*options):
        load: Dict[int, int] = {}
        for group in choice:
            for u in group:
                load[u] = load.get(u, 0) + 1
        if any(cap[u] is not None and n > cap[u] for u, n in load.items()):
            continue
        total = sum((cost[u] * n for u, n in load.items()), Fraction(0))
        if best is None or total < best:
            best, best_choice = total, choice
    if best is None:
        raise AuctionError("no assignment satisfies the capacities")
    assign: Dict[int, set] = {}
    for t, group in zip(tids, best_choice):
        for u in group:
            assign.setdefault(u, set()).add(t)
    return best, {u: frozenset(ts) for u, ts in assign.items()}


def greedy_cost(inst: AuctionInstance, r: Optional[int] = None) -> Fraction:
    r = inst.repeat() if r is None else r
    return allocation_cost(alloc_rule(task_copies(inst.tasks, r), inst.bids), inst.bids)


def check_ae(inst: AuctionInstance, r: Optional[int] = None) -> PropertyReport:
    best, _ = brute_force_ae(inst, r)
    got = greedy_cost(inst, r)
    if got == best:
        return PropertyReport("ae", True, trials=1, worst_margin=Fraction(0))
    return PropertyReport("ae", False, trials=1, worst_margin=got - best,
                          counterexample={"instance": inst.to_dict(), "greedy": str(got), "optimum": str(best)})


# ---------------------------------------------------------------------------
# dominant-strategy truthfulness and individual rationality
# ---------------------------------------------------------------------------

@dataclass
class DeviationGrid:
    cost_values: List[Fraction]
    max_subset_size: Optional[int] = None  # None = all subsets

    def __post_init__(self):
        self.cost_values = sorted(as_rational(c) for c in self.cost_values)
        if not self.cost_values:
            raise ValueError("empty cost grid")

    @classmethod
    def spanning(cls, lo, hi, points: int = 9, **kw) -> "DeviationGrid":
        lo, hi = as_rational(lo), as_rational(hi)
        step = (hi - lo) / (points - 1)
        return cls([lo + k * step for k in range(points)], **kw)

    def subsets(self, tasks: Iterable[int]) -> Iterable[frozenset]:
        tasks = sorted(tasks)
        top = len(tasks) if self.max_subset_size is None else min(self.max_subset_size, len(tasks))
        for k in range(1, top + 1):
            for combo in itertools.combinations(tasks, k):
                yield frozenset(combo)


def check_dsic(inst: AuctionInstance, grid: DeviationGrid, r: Optional[int] = None) -> PropertyReport:
    """Every bidder's truthful utility must weakly beat every grid deviation.

    The instance's bids are taken as the true types.  Deviations that make
    the auction undefined (a competition violation) are skipped and counted.
    """
    truth = run_csopt(inst, r)
    trials = skipped = 0
    worst: Optional[Fraction] = None
    for b in inst.bids:
        u_true = truth.utility(b.user_id, b.cost_per_task)
        for c in grid.cost_values:
            for ts in grid.subsets(b.task_ids):
                if c == b.cost_per_task and ts == b.task_ids:
                    continue
                dev = inst.with_bid(b.replace(cost_per_task=c, task_ids=ts))
                try:
                    out = run_csopt(dev, r)
                except AuctionError:
                    skipped += 1
                    continue
                trials += 1
                gain = out.utility(b.user_id, b.cost_per_task) - u_true
                if worst is None or gain > worst:
                    worst = gain
                if gain > 0:
                    return PropertyReport(
                        "dsic", False, trials, skipped, gain,
                        {"instance": inst.to_dict(), "user_id": b.user_id,
                         "reported_cost": str(c), "reported_tasks": sorted(ts),
                         "truthful_utility": str(u_true), "gain": str(gain)})
    return PropertyReport("dsic", True, trials, skipped, worst)


def check_ir(inst: AuctionInstance, r: Optional[int] = None) -> PropertyReport:
    out = run_csopt(inst, r)
    worst = None
    for b in inst.bids:
        s = out.utility(b.user_id, b.cost_per_task)
        worst = s if worst is None else min(worst, s)
        if s < 0:
            return PropertyReport("ir", False, len(inst.bids), 0, s,
                                  {"instance": inst.to_dict(), "user_id": b.user_id, "surplus": str(s)})
    return PropertyReport("ir", True, len(inst.bids), 0, worst)


def check_scale_covariance(inst: AuctionInstance, factor, r: Optional[int] = None) -> PropertyReport:
    factor = as_rational(factor)
    a, b = run_csopt(inst, r), run_csopt(inst.scaled(factor), r)
    ok = a.assignments == b.assignments and all(
        b.payments[u] == factor * p for u, p in a.payments.items())
    if ok:
        return PropertyReport("scale_covariance", True, 1)
    return PropertyReport("scale_covariance", False, 1,
                          counterexample={"instance": inst.to_dict(), "factor": str(factor)})


# ---------------------------------------------------------------------------
# payment as an integral of the assignment curve
# ---------------------------------------------------------------------------

def n_assigned_at(inst: AuctionInstance, user_id: int, cost, r: Optional[int] = None) -> int:
    r = inst.repeat() if r is None else r
    b = inst.bid_of(user_id)
    dev = inst.with_bid(b.replace(cost_per_task=cost))
    return len(alloc_rule(task_copies(inst.tasks, r), dev.bids).get(user_id, ()))


def assignment_curve(inst: AuctionInstance, user_id: int, costs: Sequence,
                     r: Optional[int] = None) -> List[int]:
    return [n_assigned_at(inst, user_id, c, r) for c in costs]


def step_integral(inst: AuctionInstance, user_id: int, r: Optional[int] = None) -> Fraction:
    """Exact value of the integral of n_i(z) for z from the bidder's cost up to
    a cost at which it wins nothing.

    The greedy depends on the reported cost only through its rank among the
    other bids, so n_i is constant between consecutive competitor costs.  The
    integral is the sum of (interval length) x (n_i at the interval midpoint).
    """
    own = inst.bid_of(user_id).cost_per_task
    others = sorted({b.cost_per_task for b in inst.bids if b.user_id != user_id})
    top = max(others + [own]) + 1
    if n_assigned_at(inst, user_id, top, r) != 0:
        raise AuctionError(f"bidder {user_id} still wins at cost {top}; no competition")
    pts = [own] + [c for c in others if c > own] + [top]
    total = Fraction(0)
    for lo, hi in zip(pts, pts[1:]):
        total += (hi - lo) * n_assigned_at(inst, user_id, (lo + hi) / 2, r)
    return total


def check_payment_identity(inst: AuctionInstance, r: Optional[int] = None) -> PropertyReport:
    out = run_csopt(inst, r)
    for b in inst.bids:
        paid = out.payments[b.user_id] - b.cost_per_task * out.n_assigned(b.user_id)
        area = step_integral(inst, b.user_id, r)
        if paid != area:
            return PropertyReport("payment_identity", False, len(inst.bids), 0, paid - area,
                                  {"instance": inst.to_dict(), "user_id": b.user_id,
                                   "surplus": str(paid), "integral": str(area)})
    return PropertyReport("payment_identity", True, len(inst.bids), 0, Fraction(0))


def check_capacity_incentive(inst: AuctionInstance, user_id: int, capacities: Sequence[int],
                             r: Optional[int] = None) -> PropertyReport:
    """Truthful incentive surplus as a function of the reported capacity.

    Only informative when capacities bind; not part of the default suite.
    """
    b = inst.bid_of(user_id)
    prev = None
    trials = skipped = 0
    for k in sorted(capacities):
        try:
            out = run_csopt(inst.with_bid(b.replace(capacity=k)), r)
        except AuctionError:
            skipped += 1
            continue
        trials += 1
        rho = out.payments[user_id] - b.cost_per_task * out.n_assigned(user_id)
        if prev is not None and rho < prev:
            return PropertyReport("capacity_incentive", False, trials, skipped, rho - prev,
                                  {"instance": inst.to_dict(), "user_id": user_id, "capacity": k})
        prev = rho
    return PropertyReport("capacity_incentive", True, trials, skipped)


# ---------------------------------------------------------------------------
# type distributions
# ---------------------------------------------------------------------------

@dataclass
class TypeDistribution:
    """Cost distribution conditional on capacity k, on [c_lower, c_upper]."""

    c_lower: float
    c_upper: float
    cdf: Callable  # (c, k) -> F(c|k)
    pdf: Callable  # (c, k) -> f(c|k)
    k_lower: int = 1
    k_upper: int = 1
    ppf: Optional[Callable] = None  # (u, k) -> c, inverse of cdf

    def sample(self, rng: np.random.Generator, k: int = 1) -> float:
        u = rng.random()
        if self.ppf is not None:
            return self.ppf(u, k)
        lo, hi = float(self.c_lower), float(self.c_upper)
        for _ in range(60):
            mid = (lo + hi) / 2
            if self.cdf(mid, k) < u:
                lo = mid
            else:
                hi = mid
        return (lo + hi) / 2

    @classmethod
    def uniform(cls, lo, hi) -> "TypeDistribution":
        lo, hi = as_rational(lo), as_rational(hi)
        w = hi - lo

        def cdf(c, k=1):
            c = as_rational(c)
            return min(max((c - lo) / w, Fraction(0)), Fraction(1))

        def pdf(c, k=1):
            c = as_rational(c)
            return 1 / w if lo <= c <= hi else Fraction(0)

        return cls(lo, hi, cdf, pdf, ppf=lambda u, k=1: float(lo) + u * float(w))

    @classmethod
    def piecewise_constant(cls, breaks: Sequence, heights: Sequence) -> "TypeDistribution":
        """Density equal to heights[m] on [breaks[m], breaks[m+1]); must integrate to 1."""
        breaks = [as_rational(x) for x in breaks]
        heights = [as_rational(h) for h in heights]
        if len(breaks) != len(heights) + 1:
            raise ValueError("need one more break than heights")
        mass = sum((breaks[m + 1] - breaks[m]) * h for m, h in enumerate(heights))
        if mass != 1:
            raise ValueError(f"density integrates to {mass}, not 1")

        def seg(c):
            for m in range(len(heights)):
                if breaks[m] <= c < breaks[m + 1]:
                    return m
            return len(heights) - 1 if c == breaks[-1] else None

        def pdf(c, k=1):
            m = seg(as_rational(c))
            return Fraction(0) if m is None else heights[m]

        def cdf(c, k=1):
            c = as_rational(c)
            if c <= breaks[0]:
                return Fraction(0)
            if c >= breaks[-1]:
                return Fraction(1)
            acc = Fraction(0)
            for m, h in enumerate(heights):
                if c >= breaks[m + 1]:
                    acc += (breaks[m + 1] - breaks[m]) * h
                else:
                    return acc + (c - breaks[m]) * h
            return acc

        return cls(breaks[0], breaks[-1], cdf, pdf)


def virtual_cost(dist: TypeDistribution, c, k: int = 1):
    f = dist.pdf(c, k)
    if f <= 0:
        raise ZeroDensity(f"density vanishes at c={c}, k={k}")
    return c + dist.cdf(c, k) / f


def check_regularity(dist: TypeDistribution, cost_grid: Sequence, capacity_grid: Sequence[int] = (1,)) -> PropertyReport:
    """Virtual cost must be non-decreasing in cost and non-increasing in capacity."""
    costs = sorted(cost_grid)
    caps = sorted(capacity_grid)
    table = {(c, k): virtual_cost(dist, c, k) for c in costs for k in caps}
    for k in caps:
        for c0, c1 in zip(costs, costs[1:]):
            if table[c1, k] < table[c0, k]:
                return PropertyReport("regularity", False, len(table), 0, table[c1, k] - table[c0, k],
                                      {"direction": "cost", "k": k, "c": [str(c0), str(c1)]})
    for c in costs:
        for k0, k1 in zip(caps, caps[1:]):
            if table[c, k1] > table[c, k0]:
                return PropertyReport("regularity", False, len(table), 0, table[c, k1] - table[c, k0],
                                      {"direction": "capacity", "c": str(c), "k": [k0, k1]})
    return PropertyReport("regularity", True, len(table))


# ---------------------------------------------------------------------------
# expected assignment monotonicity (Monte Carlo)
# ---------------------------------------------------------------------------

@dataclass
class MonotoneEstimate:
    cost_values: List
    mean: List[float]
    stderr: List[float]
    samples: int
    skipped: int = 0
    report: Optional[PropertyReport] = None


def check_monotone_expected_assignment(dist: TypeDistribution, sampler: Callable, cost_values: Sequence,
                                       user_id: int = 0, samples: int = 1000, seed: int = 0,
                                       r: Optional[int] = None) -> MonotoneEstimate:
    """Estimate N_i(c), the expected number of tasks won at reported cost c.

    ``sampler(dist, rng)`` returns an instance containing ``user_id`` whose
    other bids are drawn from ``dist``.  All cost values are evaluated on the
    same opponent profiles, so a rise between adjacent costs fails only when
    it exceeds two paired standard errors.
    """
    rng = np.random.default_rng(seed)
    costs = sorted(as_rational(c) for c in cost_values)
    rows = []
    skipped = 0
    for _ in range(samples):
        inst = sampler(dist, rng)
        try:
            rows.append(assignment_curve(inst, user_id, costs, r))
        except AuctionError:
            skipped += 1
    n = np.asarray(rows, dtype=float)
    m = len(rows)
    mean = n.mean(axis=0)
    se = n.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros(len(costs))
    report = PropertyReport("monotone_expected_assignment", True, m, skipped)
    worst = None
    for a in range(len(costs) - 1):
        d = n[:, a + 1] - n[:, a]
        rise = d.mean()
        d_se = d.std(ddof=1) / math.sqrt(m) if m > 1 else 0.0
        worst = rise if worst is None else max(worst, rise)
        if rise > 2 * d_se and rise > 0:
            report = PropertyReport("monotone_expected_assignment", False, m, skipped, Fraction(rise),
                                    {"between": [str(costs[a]), str(costs[a + 1])], "rise": rise, "stderr": d_se})
            break
    if report.passed and worst is not None:
        report.worst_margin = Fraction(worst).limit_denominator(10**6)
    return MonotoneEstimate(costs, mean.tolist(), se.tolist(), m, skipped, report)


# ---------------------------------------------------------------------------
# random small instances for the property suites
# ---------------------------------------------------------------------------

def random_small_instance(rng: random.Random, max_bidders: int = 5, max_tasks: int = 6, max_r: int = 2,
                          cost_lo: int = 50, cost_hi: int = 100, max_task_set: Optional[int] = None,
                          competitive: bool = True, attempts: int = 1000) -> AuctionInstance:
    """Draw a small instance with integer costs from [cost_lo, cost_hi].

    With ``competitive`` every task gets at least r + 1 interested bidders so
    the pivotal payments are defined.
    """
    from .auction import Task, validate_instance

    half = Fraction(1, 2)
    for _ in range(attempts):
        r = rng.randint(1, max_r)
        n_users = rng.randint(r + 1 if competitive else r, max_bidders)
        n_tasks = rng.randint(1, max_tasks)
        tasks = [Task(j) for j in range(n_tasks)]
        bids = []
        for u in range(n_users):
            size = rng.randint(1, n_tasks if max_task_set is None else min(n_tasks, max_task_set))
            ts = rng.sample(range(n_tasks), size)
            bids.append(Bid(u, rng.randint(cost_lo, cost_hi), ts))
        inst = AuctionInstance(tasks, bids, half, half, r=r)
        rep = validate_instance(inst)
        if (rep.feasible if competitive else not rep.deficient_tasks):
            return inst
    raise RuntimeError("could not draw a feasible instance")


def run_suite(n_instances: int = 200, seed: int = 0, cost_points: int = 9,
              max_task_set: int = 4) -> List[PropertyReport]:
    """AE, DSIC, IR, payment-identity and scale checks over random small instances.

    Each instance draws from its own stream ``Random((seed, index))``.
    """
    totals = {name: PropertyReport(name, True) for name in
              ("ae", "dsic", "ir", "payment_identity", "scale_covariance")}
    grid = DeviationGrid.spanning(50, 100, cost_points)
    for k in range(n_instances):
        rng = random.Random(f"suite:{seed}:{k}")
        inst = random_small_instance(rng, max_task_set=max_task_set)
        for rep in (check_ae(inst), check_dsic(inst, grid), check_ir(inst),
                    check_payment_identity(inst), check_scale_covariance(inst, Fraction(7, 3))):
            agg = totals[rep.name]
            if not agg.passed:
                continue
            if rep.passed:
                agg.trials += rep.trials
                agg.skipped += rep.skipped
            else:
                totals[rep.name] = rep
    return list(totals.values())
