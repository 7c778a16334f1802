import csv
import io
import json

import numpy as np
import pytest

from compass.errors import GuardExceeded
from compass.oracle import (
    ExactEstimator,
    OracleReport,
    SubplanRecord,
    accuracy_ratio,
    build_report,
    connected_subsets,
    exact_cardinality,
    exhaustive_leftdeep_costs,
    leftdeep_orders,
    max_permutation_l1,
    permutation_l1,
    reports_to_csv,
)
from compass.planner import Edge, EnumConfig, JoinGraph, SketchEstimator, enumerate_plans
from helpers import synthetic_graph
from oracles import nested_loop_join_count

# -- exact cardinality ----------------------------------------------------------------


def test_empty_table_gives_zero():
    tables = {"a": {"e": np.array([1, 2])}, "b": {"e": np.array([], dtype=np.int64), "f": np.array([], dtype=np.int64)},
              "c": {"f": np.array([1])}}
    assert exact_cardinality(tables, [("e", "a", "b"), ("f", "b", "c")]) == 0


def test_single_chain_is_one():
    tables = {"a": {"e": [7]}, "b": {"e": [7], "f": [3]}, "c": {"f": [3]}}
    assert exact_cardinality(tables, [("e", "a", "b"), ("f", "b", "c")]) == 1


def test_single_table_counts_rows():
    assert exact_cardinality({"a": {"e": [1, 1, 2]}}, []) == 3


def _rows(cols):
    n = len(next(iter(cols.values())))
    return [{c: (None if v[i] is None else int(v[i])) for c, v in cols.items()} for i in range(n)]


@pytest.mark.parametrize("triangle", [False, True])
def test_matches_nested_loop(rng, triangle):
    n = 100
    cols = {
        "a": {"e": rng.integers(0, 12, n), "g": rng.integers(0, 6, n)},
        "b": {"e": rng.integers(0, 12, n), "f": rng.integers(0, 12, n)},
        "c": {"f": rng.integers(0, 12, n), "g": rng.integers(0, 6, n)},
    }
    edges = [("e", "a", "b"), ("f", "b", "c")] + ([("g", "a", "c")] if triangle else [])
    used = {t: {e for e, x, y in edges if t in (x, y)} for t in cols}
    tables = {t: {e: cols[t][e] for e in used[t]} for t in cols}
    loops = [(x, e, y, e) for e, x, y in edges]
    truth = nested_loop_join_count({t: _rows(tables[t]) for t in tables}, loops)
    assert exact_cardinality(tables, edges) == truth
    # permutation invariance in table order
    assert exact_cardinality(dict(reversed(list(tables.items()))), edges[::-1]) == truth


def test_null_join_keys_excluded():
    tables = {"a": {"e": [1, 1]}, "b": {"e": [1, 1]}}
    assert exact_cardinality(tables, [("e", "a", "b")]) == 4
    valid = {"a": {"e": np.array([True, False])}}
    assert exact_cardinality(tables, [("e", "a", "b")], valid) == 2


def test_guard():
    tables = {"a": {"e": np.zeros(200)}, "b": {"e": np.zeros(200), "f": np.arange(200)}, "c": {"f": np.arange(200)}}
    assert exact_cardinality(tables, [("e", "a", "b"), ("f", "b", "c")]) == 40_000
    with pytest.raises(GuardExceeded):
        exact_cardinality(tables, [("e", "a", "b"), ("f", "b", "c")], max_rows=100)


def test_exact_estimator_uses_scan_results():
    g, results, _ = synthetic_graph(4, rows=80, seed=2, extra=1)
    exact = ExactEstimator(g, results)
    for v in g.vertices:
        assert exact([v]) == results[v].exact_count
    full = exact(g.vertices)
    assert exact(list(reversed(g.vertices))) == full and exact.calls == 2 + len(g)


# -- metrics ------------------------------------------------------------------------------


def test_l1_worked_example():
    assert permutation_l1([198, 18e6, 6.5e6], [6, 1194, 1224]) == (2, 2 / 3)


def test_l1_basic_cases():
    assert permutation_l1([1, 2, 3], [10, 20, 30]) == (0, 0.0)
    assert permutation_l1([3, 2, 1], [1, 2, 3])[0] == 4
    assert permutation_l1([5], [9]) == (0, 0.0)
    with pytest.raises(ValueError):
        permutation_l1([1], [1, 2])
    with pytest.raises(ValueError):
        permutation_l1([], [])


def test_l1_ties_use_stable_index():
    assert permutation_l1([1, 1, 1], [1, 1, 1])[0] == 0
    # truths tied: ranks (1, 2); estimates rank the second item first
    assert permutation_l1([2, 1], [5, 5])[0] == 2


def test_l1_reversal_is_maximum(rng):
    for n in range(1, 9):
        truths = np.arange(n)
        assert permutation_l1(truths[::-1], truths)[0] == max_permutation_l1(n)
        for _ in range(30):
            assert permutation_l1(rng.permutation(n), truths)[0] <= max_permutation_l1(n)


def test_accuracy_ratio():
    assert accuracy_ratio(10, 10) == 1
    assert accuracy_ratio(3000, 14) == pytest.approx(214.2857, rel=1e-4)
    assert accuracy_ratio(0, 5) == 0
    assert accuracy_ratio(5, 0) is None
    with pytest.raises(ValueError):
        accuracy_ratio(1, -1)


# -- plan space --------------------------------------------------------------------------


def _path3():
    return JoinGraph({"a": 2, "b": 3, "c": 4}, [Edge("e", "a", "x", "b", "x"), Edge("f", "b", "y", "c", "y")])


def test_leftdeep_orders():
    two = JoinGraph({"a": 2, "b": 3}, [Edge("e", "a", "x", "b", "x")])
    costs = exhaustive_leftdeep_costs(two, lambda C: 2.0 if len(C) == 1 else 5.0)
    assert sorted(o for o, _ in costs) == [("a", "b"), ("b", "a")] and costs[0][1] == costs[1][1]
    orders = set(leftdeep_orders(_path3()))
    assert len(orders) == 4 and ("a", "c", "b") not in orders and ("c", "a", "b") not in orders


def test_exhaustive_guard():
    g = JoinGraph({f"v{i}": 1 for i in range(9)}, [Edge(f"e{i}", "v0", "k", f"v{i}", "k") for i in range(1, 9)])
    with pytest.raises(GuardExceeded):
        exhaustive_leftdeep_costs(g, lambda C: 1.0)


def test_exhaustive_agrees_with_planner():
    g, results, _ = synthetic_graph(5, rows=60, seed=11, extra=1)
    exact = ExactEstimator(g, results)
    costs = dict(exhaustive_leftdeep_costs(g, exact))
    res = enumerate_plans(g, EnumConfig(max_plans=None, prune=False), exact)
    assert costs[res.opt_path] == res.min_cost == min(costs.values())


def test_connected_subsets():
    g = _path3()
    assert connected_subsets(g) == [("a", "b"), ("b", "c"), ("a", "b", "c")]
    assert connected_subsets(g, min_size=1)[:3] == [("a",), ("b",), ("c",)]
    assert connected_subsets(g, max_size=2) == [("a", "b"), ("b", "c")]


# -- reports -------------------------------------------------------------------------------


def test_report_zero_truth_and_l1_by_hand():
    rep = OracleReport("q")
    for vs, truth, est in [(("a", "b"), 10, 30.0), (("b", "c"), 0, 4.0), (("c", "d"), 20, 5.0)]:
        rep.subplans.append(SubplanRecord(vs, 2, truth, est, accuracy_ratio(est, truth), truth == 0))
    s = rep.summary()[2]
    assert s["zero_truth"] == 1 and s["median_ratio"] == pytest.approx((3.0 + 0.25) / 2)
    # truth ranks (2, 1, 3); estimate ranks (3, 1, 2) -> 1 + 0 + 1
    assert permutation_l1([30, 4, 5], [10, 0, 20])[0] == 2


def test_build_report_and_serialization():
    g, results, sketches = synthetic_graph(4, rows=150, seed=3, extra=1)
    rep = build_report("q1", g, SketchEstimator(g, sketches), ExactEstimator(g, results), max_size=3)
    sizes = {s.size for s in rep.subplans}
    assert sizes == {2, 3}
    for size, entry in rep.l1.items():
        recs = [s for s in rep.subplans if s.size == size]
        assert entry["n"] == len(recs)
        assert entry["distance"] == permutation_l1([r.estimate for r in recs], [r.truth for r in recs])[0]
        assert entry["distance"] <= entry["max"]
    doc = json.loads(json.dumps(rep.to_json()))
    assert doc["query"] == "q1" and len(doc["subplans"]) == len(rep.subplans)
    rows = list(csv.DictReader(io.StringIO(reports_to_csv([rep, rep]))))
    assert len(rows) == 2 * len(rep.subplans)
    assert {r["query"] for r in rows} == {"q1"}
    assert reports_to_csv([]) == ""
