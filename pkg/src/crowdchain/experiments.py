"""Grid-world scenarios, sweeps and report files."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .auction import (
    AuctionError,
    AuctionInstance,
    Bid,
    Task,
    as_rational,
    run_csopt,
    validate_instance,
)
from .chain import TimingParams, run_scripted
from .gssum import SCORE_RULE, run_gssum

CSV_HEADER = ["algorithm", "n_users", "n_tasks", "r", "seed", "total_payment", "total_cost", "runtime_s"]

DESIGN_DECISIONS = {
    "tie_break": "ascending_user_id",
    "repeat_factor": "ceil_log_ratio_exact_check",
    "capacity_default": "unbounded",
    "cost_model": "constant_cost_per_task",
    "money": "exact_rational",
    "competition_check": "eager",
    "gssum_score": SCORE_RULE,
    "reputation_rule": "plus_one_or_halve",
    "payment_shortcut": "per_task_when_unbounded",
    "infeasible_redraw": "seed_sequence(seed, attempt)",
}


class InfeasibleScenario(AuctionError):
    pass


@dataclass(frozen=True)
class Scenario:
    n_users: int
    n_tasks: int
    grid_size: int = 100
    bid_radius: float = 15
    c_min: Fraction = Fraction(50)
    c_max: Fraction = Fraction(100)
    alpha: Fraction = Fraction(1, 2)
    beta: Fraction = Fraction(1, 2)
    r: Optional[int] = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "c_min", as_rational(self.c_min))
        object.__setattr__(self, "c_max", as_rational(self.c_max))
        if self.n_users <= 0 or self.n_tasks <= 0 or self.grid_size <= 0:
            raise ValueError("counts must be positive")
        if self.c_min > self.c_max:
            raise ValueError("c_min > c_max")
        if self.bid_radius < 0:
            raise ValueError("negative radius")


def _draw(s: Scenario, rng: np.random.Generator) -> AuctionInstance:
    g = s.grid_size
    users = rng.integers(0, g, size=(s.n_users, 2))
    tasks = rng.integers(0, g, size=(s.n_tasks, 2))
    lo, hi = int(s.c_min * 100), int(s.c_max * 100)
    if Fraction(lo, 100) != s.c_min or Fraction(hi, 100) != s.c_max:
        raise ValueError("cost bounds must be whole cents")
    cents = rng.integers(lo, hi + 1, size=s.n_users)
    d2 = ((users[:, None, :] - tasks[None, :, :]) ** 2).sum(axis=2)
    reach = d2 <= s.bid_radius ** 2
    task_objs = [Task(j, (int(tasks[j, 0]), int(tasks[j, 1]))) for j in range(s.n_tasks)]
    bids = []
    for i in range(s.n_users):
        ts = np.flatnonzero(reach[i])
        if len(ts):
            bids.append(Bid(i, Fraction(int(cents[i]), 100), ts.tolist()))
    return AuctionInstance(task_objs, bids, s.alpha, s.beta, s.r)


def generate_scenario(s: Scenario, redraw: bool = False, max_attempts: int = 1000) -> AuctionInstance:
    """Random grid instance: users and tasks placed uniformly on cells, a user
    bids on every task within ``bid_radius`` (Euclidean), costs uniform in
    whole cents over [c_min, c_max].  Users in reach of nothing submit no bid.

    An instance failing the coverage/competition check raises
    :class:`InfeasibleScenario`, unless ``redraw`` is set, in which case
    attempts 1, 2, ... draw from the seed stream ``(seed, attempt)``.
    """
    for attempt in range(max_attempts if redraw else 1):
        rng = np.random.default_rng(s.seed if attempt == 0 else [s.seed, attempt])
        inst = _draw(s, rng)
        if validate_instance(inst).feasible:
            return inst
    raise InfeasibleScenario(f"no feasible draw for {s} after {attempt + 1} attempt(s)")


def money(x: Fraction) -> str:
    """Decimal text for whole-cent amounts, ``p/q`` otherwise; both re-parse with Fraction."""
    x = Fraction(x)
    if 100 % x.denominator == 0:
        cents = x.numerator * (100 // x.denominator)
        sign = "-" if cents < 0 else ""
        q, m = divmod(abs(cents), 100)
        return f"{sign}{q}.{m:02d}"
    return str(x)


@dataclass
class ResultRow:
    algorithm: str
    n_users: int
    n_tasks: int
    r: int
    seed: int
    total_payment: Optional[Fraction]
    total_cost: Optional[Fraction]
    runtime_s: Optional[float] = None
    status: str = "ok"

    def to_csv(self) -> List[str]:
        return [
            self.algorithm, str(self.n_users), str(self.n_tasks), str(self.r), str(self.seed),
            "" if self.total_payment is None else money(self.total_payment),
            "" if self.total_cost is None else money(self.total_cost),
            "" if self.runtime_s is None else f"{self.runtime_s:.6f}",
        ]

    @classmethod
    def from_csv(cls, rec: Dict[str, str]) -> "ResultRow":
        def frac(v):
            return Fraction(v) if v != "" else None
        return cls(rec["algorithm"], int(rec["n_users"]), int(rec["n_tasks"]), int(rec["r"]), int(rec["seed"]),
                   frac(rec["total_payment"]), frac(rec["total_cost"]),
                   float(rec["runtime_s"]) if rec["runtime_s"] != "" else None)

    def key(self):
        return (self.algorithm, self.n_users, self.n_tasks, self.r, self.seed)


ALGORITHMS = ("csopt", "gssum")


def run_algorithm(name: str, inst: AuctionInstance, gssum_score: str = SCORE_RULE):
    if name == "csopt":
        return run_csopt(inst)
    if name == "gssum":
        return run_gssum(inst, score=gssum_score)
    raise ValueError(f"unknown algorithm {name!r}")


@dataclass
class SweepSpec:
    users: Sequence[int] = (100, 200, 300, 400, 500, 600, 700, 800, 900, 1000)
    tasks: Sequence[int] = (200,)
    rs: Sequence[int] = (1,)
    seeds: Sequence[int] = tuple(range(10))
    algorithms: Sequence[str] = ("csopt", "gssum")
    grid_size: int = 100
    bid_radius: float = 15
    c_min: Fraction = Fraction(50)
    c_max: Fraction = Fraction(100)
    timing: bool = False
    redraw: bool = True
    gssum_score: str = SCORE_RULE

    def scenarios(self) -> Iterable[Scenario]:
        for n in self.users:
            for m in self.tasks:
                for r in self.rs:
                    for seed in self.seeds:
                        yield Scenario(n, m, self.grid_size, self.bid_radius, self.c_min, self.c_max,
                                       r=r, seed=seed)


def run_scenario(s: Scenario, algorithms: Sequence[str], timing: bool = False,
                 redraw: bool = True, gssum_score: str = SCORE_RULE) -> List[ResultRow]:
    try:
        inst = generate_scenario(s, redraw=redraw)
    except InfeasibleScenario:
        return [ResultRow(a, s.n_users, s.n_tasks, s.r, s.seed, None, None, None, "infeasible")
                for a in algorithms]
    rows = []
    for a in algorithms:
        t0 = time.perf_counter()
        try:
            out = run_algorithm(a, inst, gssum_score)
        except AuctionError as e:
            rows.append(ResultRow(a, s.n_users, s.n_tasks, s.r, s.seed, None, None, None,
                                  type(e).__name__))
            continue
        dt = time.perf_counter() - t0
        rows.append(ResultRow(a, s.n_users, s.n_tasks, s.r, s.seed, out.total_payment, out.total_cost,
                              dt if timing else None))
    return rows


def run_experiment(spec: SweepSpec, workers: int = 1) -> List[ResultRow]:
    """One row per (algorithm, scenario, seed), sorted by that key."""
    scenarios = list(spec.scenarios())
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            parts = ex.map(run_scenario, scenarios, [spec.algorithms] * len(scenarios),
                           [spec.timing] * len(scenarios), [spec.redraw] * len(scenarios),
                           [spec.gssum_score] * len(scenarios))
            rows = [r for part in parts for r in part]
    else:
        rows = [r for s in scenarios
                for r in run_scenario(s, spec.algorithms, spec.timing, spec.redraw, spec.gssum_score)]
    return sorted(rows, key=ResultRow.key)


@dataclass
class Aggregate:
    algorithm: str
    n_users: int
    n_tasks: int
    r: int
    n: int
    mean: float
    stderr: float


def aggregate(rows: Iterable[ResultRow]) -> List[Aggregate]:
    groups: Dict[tuple, List[float]] = {}
    for row in rows:
        if row.status != "ok":
            continue
        groups.setdefault((row.algorithm, row.n_users, row.n_tasks, row.r), []).append(float(row.total_payment))
    out = []
    for k in sorted(groups):
        v = np.asarray(groups[k])
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        out.append(Aggregate(*k, len(v), float(v.mean()), se))
    return out


def trend_violations(aggs: Sequence[Aggregate], algorithm: str, direction: str, along: str = "n_users",
                     sigmas: float = 2.0) -> List[Tuple[Aggregate, Aggregate]]:
    """Adjacent pairs that break a non-increasing / non-decreasing trend by
    more than ``sigmas`` combined standard errors."""
    pts = sorted((a for a in aggs if a.algorithm == algorithm), key=lambda a: getattr(a, along))
    bad = []
    for a, b in zip(pts, pts[1:]):
        slack = sigmas * math.hypot(a.stderr, b.stderr)
        if direction == "non_increasing" and b.mean - a.mean > slack:
            bad.append((a, b))
        if direction == "non_decreasing" and a.mean - b.mean > slack:
            bad.append((a, b))
    return bad


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def metadata(config: Optional[dict] = None) -> dict:
    return {
        "package": "crowdchain",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "design_decisions": DESIGN_DECISIONS,
        "config": config or {},
    }


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.to_csv())
    return buf.getvalue()


def emit_report(rows: Sequence[ResultRow], path, fmt: str = "csv", config: Optional[dict] = None) -> List[Path]:
    """Write rows as CSV (plus a ``.meta.json`` sidecar) or as one JSON document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = metadata(config)
    if fmt == "csv":
        path.write_text(rows_to_csv(rows))
        side = path.with_name(path.name + ".meta.json")
        side.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
        return [path, side]
    if fmt == "json":
        doc = {"metadata": meta, "rows": [dict(zip(CSV_HEADER, r.to_csv())) | {"status": r.status} for r in rows]}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
        return [path]
    raise ValueError(f"unknown format {fmt!r}")


def read_report(path, fmt: str = "csv") -> List[ResultRow]:
    path = Path(path)
    if fmt == "csv":
        with path.open(newline="") as fh:
            return [ResultRow.from_csv(rec) for rec in csv.DictReader(fh)]
    doc = json.loads(path.read_text())
    out = []
    for rec in doc["rows"]:
        row = ResultRow.from_csv(rec)
        row.status = rec.get("status", "ok")
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# timing
# ---------------------------------------------------------------------------

@dataclass
class TimingRow:
    n_users: int
    n_tasks: int
    seed: int
    t_csopt: float
    total_payment: Fraction


def bench_timing(sizes: Sequence[Tuple[int, int]], seed: int = 0, radius: float = 15,
                 grid_size: int = 100) -> List[TimingRow]:
    rows = []
    for n, m in sizes:
        inst = generate_scenario(Scenario(n, m, grid_size, radius, seed=seed), redraw=True)
        t0 = time.perf_counter()
        out = run_csopt(inst)
        rows.append(TimingRow(n, m, seed, time.perf_counter() - t0, out.total_payment))
    return rows


@dataclass
class DelayReport:
    timing: TimingParams
    formula: object
    simulated: object
    within_one_block: bool


def sim_delay(timing: TimingParams, inst: Optional[AuctionInstance] = None, seed: int = 0,
              measure: bool = False, scenario: Optional[Scenario] = None) -> DelayReport:
    """Run the scripted chain flow and compare its completion time with the formula.

    With ``measure`` the auction is timed first and the measured seconds are
    used as t_CSOPT.
    """
    if inst is None:
        inst = generate_scenario(scenario or Scenario(40, 10, 30, 10, seed=seed), redraw=True)
    if measure:
        t0 = time.perf_counter()
        run_csopt(inst)
        timing = replace(timing, t_csopt=time.perf_counter() - t0)
    run = run_scripted(inst, timing, seed=seed)
    sim = run.completed_at
    ok = sim is not None and abs(sim - run.formula) <= timing.t_block
    return DelayReport(timing, run.formula, sim, ok)
