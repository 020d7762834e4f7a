"""GSSUM-style greedy baseline.

A selected user receives its whole bid set and is paid its reported cost for
all of it, whether or not every task was still needed.  Two selection scores
are available:

``set_cover`` (default)
    weighted set-cover greedy: cheapest full-set cost per still-needed copy.
``cheapest_first``
    cheapest cost per task among users that still cover a needed copy.
"""
from __future__ import annotations

import heapq
from fractions import Fraction
from typing import Optional

from .auction import AuctionInstance, AuctionOutcome, InfeasibleInstance

SCORE_RULE = "set_cover"
SCORES = ("set_cover", "cheapest_first")


def run_gssum(inst: AuctionInstance, r: Optional[int] = None, score: str = SCORE_RULE) -> AuctionOutcome:
    if score not in SCORES:
        raise ValueError(f"unknown GSSUM score {score!r}")
    r = inst.repeat() if r is None else r
    need = {t: r for t in inst.task_ids}
    given = {t: 0 for t in inst.task_ids}
    left = r * len(need)

    def gain(b):
        return sum(1 for t in b.task_ids if need[t] > 0)

    if score == "set_cover":
        def key_of(b, g):
            return b.cost_per_task * len(b.task_ids) / g
    else:
        def key_of(b, g):
            return b.cost_per_task

    # scores only grow as coverage fills in, so stale heap entries can be
    # re-scored lazily without changing the selection order
    heap = []
    for b in inst.bids:
        g = gain(b)
        if g:
            heap.append((key_of(b, g), b.user_id, b))
    heapq.heapify(heap)

    assignments = {b.user_id: frozenset() for b in inst.bids}
    payments = {b.user_id: Fraction(0) for b in inst.bids}
    while left and heap:
        _, uid, b = heapq.heappop(heap)
        g = gain(b)
        if not g:
            continue
        key = (key_of(b, g), uid)
        if heap and key > heap[0][:2]:
            heapq.heappush(heap, (key[0], uid, b))
            continue
        got = []
        for t in sorted(b.task_ids):
            got.append((t, given[t]))
            given[t] += 1
            if need[t] > 0:
                need[t] -= 1
                left -= 1
        assignments[uid] = frozenset(got)
        payments[uid] = b.cost_per_task * len(b.task_ids)
    if left:
        short = sorted(t for t, c in need.items() if c > 0)
        raise InfeasibleInstance(f"GSSUM left {left} copies uncovered (tasks {short[:10]})")
    total = sum(payments.values(), Fraction(0))
    return AuctionOutcome(assignments, payments, total, total, r=r, algorithm="gssum",
                          meta={"score": score})
