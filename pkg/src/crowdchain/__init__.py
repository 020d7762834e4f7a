"""Truthful cost-optimal crowdsensing auctions with a simulated smart-contract ledger."""

__version__ = "0.1.0"

from .auction import (  # noqa: E402
    AuctionInstance,
    AuctionOutcome,
    Bid,
    CompetitionViolation,
    InfeasibleInstance,
    Task,
    alloc_rule,
    allocation_cost,
    payment_rule,
    repeat_factor,
    run_csopt,
    validate_instance,
)
from .gssum import run_gssum  # noqa: E402

__all__ = [
    "AuctionInstance", "AuctionOutcome", "Bid", "CompetitionViolation", "InfeasibleInstance", "Task",
    "alloc_rule", "allocation_cost", "payment_rule", "repeat_factor", "run_csopt", "validate_instance",
    "run_gssum",
]
