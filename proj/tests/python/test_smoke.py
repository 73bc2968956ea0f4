import math

import pytest

import adf

WORKED = """#unit=packets
0,10.0.0.128,TCP,ANY,192.0.2.1,20,ddos,1|2|3|5
0,10.0.0.1:2222,TCP,ANY,192.0.2.1,40,ddos,1|2|3|4
0,10.0.0.1:3333,TCP,ANY,192.0.2.1,25,legit,1|2|6
"""


def test_worked_example_yields_single_rule():
    trace = adf.parse_trace(WORKED)
    assert len(trace) == 3
    rs = adf.solve(trace, "min-rules", min_coverage=60, max_collateral=0)
    assert rs.feasible
    assert len(rs) == 1
    assert rs.rules[0].source == "10.0.0.0/24"
    assert rs.rules[0].candidates == [3]
    assert adf.evaluate(rs, trace)["collateral"] == 0


def test_solvers_agree_with_oracle_on_tiny_trace():
    trace = adf.parse_trace(WORKED)
    for objective in ("max-coverage", "min-collateral", "min-rules"):
        greedy = adf.solve(trace, objective, min_coverage=60, max_collateral=0, rule_budget=2)
        best = adf.oracle_solve(trace, objective, min_coverage=60, max_collateral=0, rule_budget=2)
        assert greedy.feasible == best.feasible
        assert math.isclose(greedy.ddos, best.ddos)


def test_bad_trace_raises():
    with pytest.raises(ValueError):
        adf.parse_trace("0,10.0.0.1,TCP,SYN,1.2.3.4,1,ddos,1\n")


def test_rule_codec_round_trip():
    rs = adf.solve(adf.parse_trace(WORKED), "min-rules", min_coverage=60, max_collateral=0)
    data = adf.encode_rule(rs.rules[0])
    assert len(data) == 44
    msg = adf.decode_message(data)
    assert msg["type"] == "submission"
    assert msg["source"] == "10.0.0.0/24"
    with pytest.raises(ValueError):
        adf.decode_message(data[:10])


def test_topology_attack_and_placement():
    topo = adf.generate_topology(seed=2, tiers=(5, 60, 400))
    assert topo.node_count == 465
    assert set(adf.profile_names()) >= {"full-participation", "victim-only"}
    trace = adf.generate_attack(topo, "ddos_sources = 200\nlegit_sources = 50\nseed = 4\n")
    assert len(trace) == 250
    rs = adf.solve(trace, "max-coverage", max_collateral=0, rule_budget=500)
    nodes = adf.participants(topo, "full-participation")
    result = adf.place(rs.rules, nodes, limit=1000)
    assert result.success_rate == 1.0
    victim_only = adf.place(rs.rules, adf.participants(topo, "victim-only"), limit=1)
    assert victim_only.success_rate <= result.success_rate
