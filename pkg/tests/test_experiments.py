import json
from fractions import Fraction

import pytest

from crowdchain.chain import TimingParams
from crowdchain.cli import main
from crowdchain.experiments import (
    CSV_HEADER,
    InfeasibleScenario,
    ResultRow,
    Scenario,
    SweepSpec,
    aggregate,
    emit_report,
    generate_scenario,
    money,
    read_report,
    run_experiment,
    sim_delay,
    trend_violations,
)


def test_radius_covering_grid_means_everyone_bids_everywhere():
    inst = generate_scenario(Scenario(20, 15, grid_size=10, bid_radius=15, seed=1))
    assert len(inst.bids) == 20
    assert all(b.task_ids == set(inst.task_ids) for b in inst.bids)


def test_radius_zero_means_co_located():
    inst = generate_scenario(Scenario(400, 5, grid_size=3, bid_radius=0, seed=2), redraw=True)
    where = {t.id: t.location for t in inst.tasks}
    for b in inst.bids:
        assert len({where[t] for t in b.task_ids}) == 1


def test_costs_in_whole_cents_within_bounds():
    inst = generate_scenario(Scenario(200, 20, seed=3), redraw=True)
    for b in inst.bids:
        assert 50 <= b.cost_per_task <= 100
        assert (b.cost_per_task * 100).denominator == 1


def test_same_seed_same_instance():
    s = Scenario(100, 30, seed=9)
    assert generate_scenario(s, redraw=True).to_json() == generate_scenario(s, redraw=True).to_json()
    assert generate_scenario(s, redraw=True).to_json() != generate_scenario(Scenario(100, 30, seed=10), redraw=True).to_json()


def test_infeasible_without_redraw():
    with pytest.raises(InfeasibleScenario):
        generate_scenario(Scenario(2, 50, seed=0))


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(0, 5)
    with pytest.raises(ValueError):
        Scenario(5, 5, c_min=10, c_max=5)
    with pytest.raises(ValueError):
        Scenario(5, 5, bid_radius=-1)


@pytest.mark.parametrize("x,text", [(Fraction(1234, 100), "12.34"), (Fraction(5), "5.00"),
                                    (Fraction(-1, 4), "-0.25"), (Fraction(1, 3), "1/3")])
def test_money(x, text):
    assert money(x) == text
    assert Fraction(text) == x


def rows_fixture(n):
    return [ResultRow("csopt", 100 + k, 50, 1, k % 10, Fraction(5000 + k, 100), Fraction(4000 + k, 100))
            for k in range(n)]


@pytest.mark.parametrize("n", [0, 1, 1000])
@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_report_round_trip(tmp_path, n, fmt):
    rows = rows_fixture(n)
    paths = emit_report(rows, tmp_path / f"out.{fmt}", fmt, {"note": "x"})
    back = read_report(paths[0], fmt)
    assert [r.to_csv() for r in back] == [r.to_csv() for r in rows]
    if fmt == "csv":
        assert paths[0].read_text().splitlines()[0] == ",".join(CSV_HEADER)
        meta = json.loads(paths[1].read_text())
        assert meta["config"] == {"note": "x"} and "design_decisions" in meta


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "x", "xml")


def test_small_sweep_is_reproducible():
    spec = SweepSpec(users=(60, 90), tasks=(20,), seeds=(0, 1, 2), grid_size=50)
    a, b = run_experiment(spec), run_experiment(spec)
    assert [r.to_csv() for r in a] == [r.to_csv() for r in b]
    assert len(a) == 2 * 2 * 3
    assert all(r.runtime_s is None and r.status == "ok" for r in a)
    for c, g in zip(a[:6], a[6:]):
        assert c.algorithm == "csopt" and g.algorithm == "gssum"
        assert c.key()[1:] == g.key()[1:]
        assert g.total_cost >= c.total_cost


def test_aggregate_and_trends():
    rows = [ResultRow("a", n, 10, 1, s, Fraction(v), Fraction(v)) for n, s, v in
            [(1, 0, 10), (1, 1, 12), (2, 0, 8), (2, 1, 9), (3, 0, 20), (3, 1, 21)]]
    aggs = aggregate(rows)
    assert [a.mean for a in aggs] == [11, 8.5, 20.5]
    assert aggs[0].stderr == pytest.approx(1.0)
    bad = trend_violations(aggs, "a", "non_increasing")
    assert [(x.n_users, y.n_users) for x, y in bad] == [(2, 3)]
    assert trend_violations(aggs, "a", "non_decreasing") == [(aggs[0], aggs[1])]


def test_sim_delay_within_a_block():
    rep = sim_delay(TimingParams(1, 2, 5, Fraction(1, 10), 10), seed=4)
    assert rep.formula == Fraction(181, 10)
    assert rep.within_one_block


# CLI ------------------------------------------------------------------------------------

def test_cli_auction_run(capsys):
    assert main(["auction", "run", "--users", "80", "--tasks", "20", "--algo", "both", "--seed", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"csopt", "gssum"}
    assert Fraction(out["gssum"]["total_payment"]) >= Fraction(out["csopt"]["total_cost"])


def test_cli_auction_from_instance_file(tmp_path, capsys, example):
    f = tmp_path / "inst.json"
    f.write_text(example.to_json())
    assert main(["auction", "run", "--instance", str(f)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["csopt"]["payments"] == {"1": "24.00"}


def test_cli_auction_error_exit_code(tmp_path, example):
    f = tmp_path / "inst.json"
    f.write_text(example.without(3).to_json())
    assert main(["auction", "run", "--instance", str(f)]) == 2


def test_cli_sweep_csv_is_byte_identical(tmp_path):
    args = ["experiment", "sweep", "--users", "60,80", "--tasks", "20", "--grid", "50", "--seeds", "2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(read_report(a)) == 8


def test_cli_bench(capsys):
    assert main(["bench", "--users", "50", "--tasks", "10"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("n_users") and len(lines) == 2


def test_cli_chain_demo(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    assert main(["chain", "demo", "--users", "40", "--tasks", "10", "--grid", "30", "--radius", "10",
                 "--t-csopt", "1", "--out", str(trace)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["within_one_block"] and out["formula_s"] == 19.0
    assert all(json.loads(line)["kind"] for line in trace.read_text().splitlines())


def test_cli_verify(tmp_path, capsys):
    f = tmp_path / "v.json"
    assert main(["verify", "--instances", "5", "--out", str(f)]) == 0
    assert capsys.readouterr().out.count("PASS") == 5
    assert len(json.loads(f.read_text())) == 5
