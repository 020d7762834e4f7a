from fractions import Fraction

import pytest
from hypothesis import strategies as st

from crowdchain.auction import AuctionInstance, Bid, Task

HALF = Fraction(1, 2)


def worked_example(mu1_tasks=range(1, 11)):
    """3 users, 10 tasks: MU1 all at $1, MU2 only T10 at $1.5, MU3 all at $2.5."""
    tasks = [Task(j) for j in range(1, 11)]
    bids = [
        Bid(1, 1, mu1_tasks),
        Bid(2, Fraction(3, 2), [10]),
        Bid(3, Fraction(5, 2), range(1, 11)),
    ]
    return AuctionInstance(tasks, bids, Fraction(9, 10), Fraction(9, 10))


@pytest.fixture
def example():
    return worked_example()


@st.composite
def small_instances(draw, max_bidders=5, max_tasks=6, max_r=2, competitive=True, capacities=False,
                    max_cost=20):
    """Random instances where every task has at least r (+1 if competitive) bidders."""
    r = draw(st.integers(1, max_r))
    extra = 1 if competitive else 0
    n_users = draw(st.integers(r + extra, max_bidders))
    n_tasks = draw(st.integers(1, max_tasks))
    sets = {u: set() for u in range(n_users)}
    for t in range(n_tasks):
        for u in draw(st.sets(st.integers(0, n_users - 1), min_size=r + extra, max_size=n_users)):
            sets[u].add(t)
    bids = []
    for u in range(n_users):
        if not sets[u]:
            sets[u].add(draw(st.integers(0, n_tasks - 1)))
        cost = draw(st.integers(0, max_cost))
        cap = draw(st.one_of(st.none(), st.integers(1, n_tasks))) if capacities else None
        bids.append(Bid(u, cost, sets[u], cap))
    return AuctionInstance([Task(j) for j in range(n_tasks)], bids, HALF, HALF, r=r)


# (sort key, text): one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
