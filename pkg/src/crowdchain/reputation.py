"""Influence limiting for sensed reports.

A report from user i enters the aggregate with probability rho_i / (rho_i + 1).
After each time slot, reports are compared with the trusted users' reading:
an accurate report earns one point of reputation, an inaccurate one halves it.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Sequence, Set, Tuple

UPDATE_RULE = "plus_one_or_halve"


class NoTrustedReference(ValueError):
    pass


def inclusion_probability(rho) -> Fraction:
    rho = Fraction(rho)
    if rho < 0:
        raise ValueError("reputation must be nonnegative")
    return rho / (rho + 1)


@dataclass
class ReputationLedger:
    scores: Dict[int, Fraction] = field(default_factory=dict)
    trusted: Set[int] = field(default_factory=set)

    def rho(self, user_id: int) -> Fraction:
        return self.scores.get(user_id, Fraction(0))

    def inclusion(self, user_id: int) -> Fraction:
        if user_id in self.trusted:
            return Fraction(1)
        return inclusion_probability(self.rho(user_id))

    def to_dict(self) -> dict:
        return {"rule": UPDATE_RULE,
                "scores": {str(u): str(r) for u, r in sorted(self.scores.items())},
                "trusted": sorted(self.trusted)}


def update_reputation(ledger: ReputationLedger, reports: Mapping[int, float],
                      trusted_reports: Sequence[float], tolerance: float) -> ReputationLedger:
    """New ledger after one time slot; ``reports`` maps user_id -> scalar reading.

    The reference is the mean of the trusted readings for the slot.
    """
    untrusted = {u: v for u, v in reports.items() if u not in ledger.trusted}
    if not untrusted:
        return ReputationLedger(dict(ledger.scores), set(ledger.trusted))
    if not trusted_reports:
        raise NoTrustedReference("no trusted report for this slot")
    ref = sum(trusted_reports) / len(trusted_reports)
    scores = dict(ledger.scores)
    for u, v in untrusted.items():
        rho = scores.get(u, Fraction(0))
        scores[u] = rho + 1 if abs(v - ref) <= tolerance else rho / 2
    return ReputationLedger(scores, set(ledger.trusted))


def filter_reports(ledger: ReputationLedger, reports: Iterable[Tuple[int, float]],
                   rng: random.Random) -> List[Tuple[int, float]]:
    """Keep each (user_id, value) report independently with its inclusion probability."""
    kept = []
    for u, v in reports:
        if u in ledger.trusted:
            kept.append((u, v))
            continue
        p = inclusion_probability(ledger.rho(u))
        # exact Bernoulli(p) for rational p
        if p and rng.randrange(p.denominator) < p.numerator:
            kept.append((u, v))
    return kept


@dataclass
class LiarTrace:
    rho: List[Fraction]            # reputation entering each slot
    expected: List[Fraction]       # cumulative expected inclusions
    included: List[int]            # cumulative realized inclusions


def simulate_liar(slots: int, initial_rho=0, lie: float = 10.0, truth: float = 0.0,
                  tolerance: float = 1.0, seed: int = 0) -> LiarTrace:
    """Track one persistent liar alongside a single trusted reporter."""
    liar, honest = 1, 0
    ledger = ReputationLedger({liar: Fraction(initial_rho)}, {honest})
    rng = random.Random(seed)
    rhos, expected, included = [], [], []
    exp_acc, inc_acc = Fraction(0), 0
    for _ in range(slots):
        rho = ledger.rho(liar)
        rhos.append(rho)
        exp_acc += inclusion_probability(rho)
        kept = filter_reports(ledger, [(liar, lie), (honest, truth)], rng)
        inc_acc += sum(1 for u, _ in kept if u == liar)
        expected.append(exp_acc)
        included.append(inc_acc)
        ledger = update_reputation(ledger, {liar: lie, honest: truth}, [truth], tolerance)
    return LiarTrace(rhos, expected, included)


def liar_influence_bound(initial_rho, slots: int) -> Fraction:
    """Closed form of sum_t rho_t/(rho_t+1) with rho_t = rho_0 / 2**t."""
    rho0 = Fraction(initial_rho)
    return sum((inclusion_probability(rho0 / 2**t) for t in range(slots)), Fraction(0))
