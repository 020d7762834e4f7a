"""CSOPT: truthful, cost-optimal procurement auction for spatial crowdsensing.

Every task must be served by ``r`` distinct mobile users, where ``r`` is the
smallest count that lifts the completion probability to ``beta`` given a
per-user success probability ``alpha``.  Allocation is a greedy pass over
bidders sorted by reported cost per task; payments add to each winner's
reported cost the increase in total allocation cost caused by removing that
winner (a pivotal/Clarke payment).

All money is kept as :class:`fractions.Fraction` so payments are exact.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

__all__ = [
    "AuctionError",
    "InfeasibleInstance",
    "CompetitionViolation",
    "Task",
    "Bid",
    "AuctionInstance",
    "AuctionOutcome",
    "FeasibilityReport",
    "as_rational",
    "repeat_factor",
    "validate_instance",
    "task_copies",
    "alloc_rule",
    "allocation_cost",
    "payment_rule",
    "run_csopt",
]

Copy = Tuple[int, int]  # (task_id, copy_index)
Assignments = Dict[int, FrozenSet[Copy]]


class AuctionError(ValueError):
    pass


class InfeasibleInstance(AuctionError):
    """Some task copy could not be assigned to any remaining bidder."""


class CompetitionViolation(AuctionError):
    """Removing a single bidder leaves the request unservable."""


def as_rational(x) -> Fraction:
    """Convert ``x`` to an exact Fraction; floats are read by their decimal repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class Task:
    id: int
    location: Optional[Tuple[int, int]] = None


@dataclass(frozen=True)
class Bid:
    user_id: int
    cost_per_task: Fraction
    task_ids: FrozenSet[int]
    capacity: Optional[int] = None  # None = unbounded

    def __post_init__(self):
        object.__setattr__(self, "cost_per_task", as_rational(self.cost_per_task))
        object.__setattr__(self, "task_ids", frozenset(self.task_ids))
        if self.cost_per_task < 0:
            raise AuctionError(f"bid {self.user_id}: negative cost {self.cost_per_task}")
        if not self.task_ids:
            raise AuctionError(f"bid {self.user_id}: empty task set")
        if self.capacity is not None and self.capacity < 1:
            raise AuctionError(f"bid {self.user_id}: capacity must be >= 1")

    def replace(self, **changes) -> "Bid":
        kw = dict(user_id=self.user_id, cost_per_task=self.cost_per_task,
                  task_ids=self.task_ids, capacity=self.capacity)
        kw.update(changes)
        return Bid(**kw)


@dataclass(frozen=True)
class AuctionInstance:
    tasks: Tuple[Task, ...]
    bids: Tuple[Bid, ...]
    alpha: Fraction
    beta: Fraction
    r: Optional[int] = None  # explicit repeat factor, overrides (alpha, beta)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "bids", tuple(self.bids))
        object.__setattr__(self, "alpha", as_rational(self.alpha))
        object.__setattr__(self, "beta", as_rational(self.beta))
        for name in ("alpha", "beta"):
            p = getattr(self, name)
            if not 0 < p < 1:
                raise AuctionError(f"{name} must lie in (0, 1), got {p}")
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise AuctionError("duplicate task ids")
        users = [b.user_id for b in self.bids]
        if len(set(users)) != len(users):
            raise AuctionError("duplicate user ids")
        known = set(ids)
        for b in self.bids:
            extra = b.task_ids - known
            if extra:
                raise AuctionError(f"bid {b.user_id} names unknown tasks {sorted(extra)}")
        if self.r is not None and self.r < 1:
            raise AuctionError("r must be >= 1")

    @property
    def task_ids(self) -> List[int]:
        return [t.id for t in self.tasks]

    def repeat(self) -> int:
        return self.r if self.r is not None else repeat_factor(self.alpha, self.beta)

    def bid_of(self, user_id: int) -> Bid:
        for b in self.bids:
            if b.user_id == user_id:
                return b
        raise KeyError(user_id)

    def with_bid(self, bid: Bid) -> "AuctionInstance":
        """Copy of the instance with the bid of ``bid.user_id`` replaced."""
        bids = tuple(bid if b.user_id == bid.user_id else b for b in self.bids)
        return AuctionInstance(self.tasks, bids, self.alpha, self.beta, self.r)

    def without(self, user_id: int) -> "AuctionInstance":
        bids = tuple(b for b in self.bids if b.user_id != user_id)
        return AuctionInstance(self.tasks, bids, self.alpha, self.beta, self.r)

    def scaled(self, factor) -> "AuctionInstance":
        factor = as_rational(factor)
        bids = tuple(b.replace(cost_per_task=b.cost_per_task * factor) for b in self.bids)
        return AuctionInstance(self.tasks, bids, self.alpha, self.beta, self.r)

    # canonical serialized form ------------------------------------------
    def to_dict(self) -> dict:
        return {
            "alpha": str(self.alpha),
            "beta": str(self.beta),
            "r": self.r,
            "tasks": [
                {"id": t.id, "location": list(t.location) if t.location is not None else None}
                for t in sorted(self.tasks, key=lambda t: t.id)
            ],
            "bids": [
                {
                    "user_id": b.user_id,
                    "cost_per_task": str(b.cost_per_task),
                    "task_ids": sorted(b.task_ids),
                    "capacity": b.capacity,
                }
                for b in sorted(self.bids, key=lambda b: b.user_id)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "AuctionInstance":
        tasks = [Task(t["id"], tuple(t["location"]) if t.get("location") is not None else None)
                 for t in d["tasks"]]
        bids = [Bid(b["user_id"], Fraction(b["cost_per_task"]), b["task_ids"], b.get("capacity"))
                for b in d["bids"]]
        return cls(tasks, bids, Fraction(d["alpha"]), Fraction(d["beta"]), d.get("r"))

    @classmethod
    def from_json(cls, s: str) -> "AuctionInstance":
        return cls.from_dict(json.loads(s))


@dataclass
class AuctionOutcome:
    assignments: Dict[int, FrozenSet[Copy]]
    payments: Dict[int, Fraction]
    total_cost: Fraction
    total_payment: Fraction
    r: int = 1
    algorithm: str = "csopt"
    meta: dict = field(default_factory=dict)

    def n_assigned(self, user_id: int) -> int:
        return len(self.assignments.get(user_id, ()))

    def tasks_of(self, user_id: int) -> FrozenSet[int]:
        return frozenset(t for t, _ in self.assignments.get(user_id, ()))

    def utility(self, user_id: int, true_cost) -> Fraction:
        return self.payments.get(user_id, Fraction(0)) - as_rational(true_cost) * self.n_assigned(user_id)

    def winners(self) -> List[int]:
        return sorted(u for u, a in self.assignments.items() if a)


def repeat_factor(alpha, beta) -> int:
    """Smallest r with 1 - (1 - alpha)**r >= beta.

    The float estimate ``ceil(log(1-beta)/log(1-alpha))`` is corrected with
    exact rational arithmetic so boundary cases such as alpha == beta give 1.
    """
    a, b = as_rational(alpha), as_rational(beta)
    if not (0 < a < 1 and 0 < b < 1):
        raise ValueError(f"alpha and beta must lie in (0, 1), got {alpha}, {beta}")
    fail, miss = 1 - a, 1 - b

    def ok(r: int) -> bool:
        return fail ** r <= miss

    r = max(1, math.ceil(math.log(float(miss)) / math.log(float(fail))))
    while r > 1 and ok(r - 1):
        r -= 1
    while not ok(r):
        r += 1
    return r


@dataclass
class FeasibilityReport:
    feasible: bool
    r: int
    deficient_tasks: List[int] = field(default_factory=list)
    pivotal_bidders: List[int] = field(default_factory=list)

    def __bool__(self):
        return self.feasible


def _interest_counts(inst: AuctionInstance) -> Dict[int, List[int]]:
    interested: Dict[int, List[int]] = {t.id: [] for t in inst.tasks}
    for b in inst.bids:
        for t in b.task_ids:
            interested[t].append(b.user_id)
    return interested


def validate_instance(inst: AuctionInstance, r: Optional[int] = None) -> FeasibilityReport:
    """Check coverage (>= r interested bidders per task) and competition
    (coverage survives the removal of any single bidder).

    Capacities are not considered; a capacity-bound instance can still fail
    later with :class:`InfeasibleInstance`.
    """
    r = inst.repeat() if r is None else r
    interested = _interest_counts(inst)
    deficient = sorted(t for t, us in interested.items() if len(us) < r)
    pivotal = sorted({u for us in interested.values() if len(us) == r for u in us})
    return FeasibilityReport(not deficient and not pivotal, r, deficient, pivotal)


def task_copies(tasks: Iterable, r: int) -> Dict[int, int]:
    """The multiset of r copies per task, as task_id -> copies needed."""
    return {(t.id if isinstance(t, Task) else t): r for t in tasks}


def _greedy_order(bids: Iterable[Bid]) -> List[Bid]:
    # equal costs broken by ascending user id
    return sorted(bids, key=lambda b: (b.cost_per_task, b.user_id))


def alloc_rule(tasks_remaining: Mapping[int, int], bids: Iterable[Bid]) -> Assignments:
    """Greedy ALLOC-RULE over a multiset of task copies.

    Bidders are visited cheapest first; each takes one copy of every task in
    its bid that still has copies outstanding (at most ``capacity`` of them,
    lowest task ids first).  Only bidders that receive something appear in
    the result.
    """
    need = {t: c for t, c in tasks_remaining.items() if c > 0}
    total = {t: c for t, c in need.items()}
    left = sum(need.values())
    out: Assignments = {}
    for b in _greedy_order(bids):
        if left == 0:
            break
        if b.capacity is None:
            hit = [t for t in b.task_ids if need.get(t, 0) > 0]
        else:
            hit = [t for t in sorted(b.task_ids) if need.get(t, 0) > 0][: b.capacity]
        if not hit:
            continue
        got = []
        for t in hit:
            got.append((t, total[t] - need[t]))
            need[t] -= 1
        left -= len(hit)
        out[b.user_id] = frozenset(got)
    if left:
        short = sorted(t for t, c in need.items() if c > 0)
        raise InfeasibleInstance(f"{left} task copies unassigned (tasks {short[:10]})")
    return out


def allocation_cost(assignments: Mapping[int, Iterable[Copy]], bids: Iterable[Bid]) -> Fraction:
    cost = {b.user_id: b.cost_per_task for b in bids}
    total = Fraction(0)
    for u, copies in assignments.items():
        if u not in cost:
            raise KeyError(f"unknown user_id {u}")
        total += cost[u] * len(copies)
    return total


def _pivot_surplus_recompute(copies: Mapping[int, int], bids: Sequence[Bid],
                             assignments: Assignments) -> Dict[int, Fraction]:
    fcost = allocation_cost(assignments, bids)
    out = {}
    for j, got in assignments.items():
        if not got:
            continue
        rest = [b for b in bids if b.user_id != j]
        try:
            alt = alloc_rule(copies, rest)
        except InfeasibleInstance as e:
            raise CompetitionViolation(f"removing bidder {j} makes the request unservable") from e
        out[j] = allocation_cost(alt, rest) - fcost
    return out


def _pivot_surplus_per_task(copies: Mapping[int, int], bids: Sequence[Bid],
                            assignments: Assignments) -> Dict[int, Fraction]:
    # With unbounded capacities the greedy decomposes per task: each task goes
    # to its r cheapest interested bidders, and removing winner j hands j's
    # copy to the next bidder in that task's queue.
    queue: Dict[int, List[Bid]] = defaultdict(list)
    for b in _greedy_order(bids):
        for t in b.task_ids:
            queue[t].append(b)
    out = {}
    for j, got in assignments.items():
        if not got:
            continue
        cj = None
        s = Fraction(0)
        for t, _ in got:
            q = queue[t]
            need = copies.get(t, 0)
            if len(q) <= need:
                raise CompetitionViolation(f"removing bidder {j} leaves task {t} short")
            if cj is None:
                cj = next(b.cost_per_task for b in q if b.user_id == j)
            s += q[need].cost_per_task - cj
        out[j] = s
    return out


def payment_rule(inst: AuctionInstance, r: int, assignments: Assignments,
                 method: str = "auto") -> Dict[int, Fraction]:
    """Pivotal payments ``p_j = n_j * c_j + scost - fcost`` for every bidder.

    ``method="recompute"`` reruns the greedy once per winner with that winner
    removed.  ``"per_task"`` uses the per-task replacement shortcut, which is
    only valid when no bid has a finite capacity; ``"auto"`` picks it then.
    """
    copies = task_copies(inst.tasks, r)
    if method == "auto":
        method = "per_task" if all(b.capacity is None for b in inst.bids) else "recompute"
    if method == "per_task":
        if any(b.capacity is not None for b in inst.bids):
            raise ValueError("per_task payments require unbounded capacities")
        surplus = _pivot_surplus_per_task(copies, inst.bids, assignments)
    elif method == "recompute":
        surplus = _pivot_surplus_recompute(copies, inst.bids, assignments)
    else:
        raise ValueError(f"unknown method {method!r}")
    pay = {}
    for b in inst.bids:
        n = len(assignments.get(b.user_id, ()))
        pay[b.user_id] = n * b.cost_per_task + surplus.get(b.user_id, Fraction(0)) if n else Fraction(0)
    return pay


def run_csopt(inst: AuctionInstance, r: Optional[int] = None, method: str = "auto") -> AuctionOutcome:
    r = inst.repeat() if r is None else r
    report = validate_instance(inst, r)
    if report.deficient_tasks:
        raise InfeasibleInstance(f"tasks with fewer than {r} bidders: {report.deficient_tasks[:10]}")
    if report.pivotal_bidders:
        raise CompetitionViolation(f"pivotal bidders: {report.pivotal_bidders[:10]}")
    copies = task_copies(inst.tasks, r)
    alloc = alloc_rule(copies, inst.bids)
    pay = payment_rule(inst, r, alloc, method=method)
    assignments = {b.user_id: alloc.get(b.user_id, frozenset()) for b in inst.bids}
    return AuctionOutcome(
        assignments=assignments,
        payments=pay,
        total_cost=allocation_cost(alloc, inst.bids),
        total_payment=sum(pay.values(), Fraction(0)),
        r=r,
        algorithm="csopt",
    )
