import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from compass.catalog import Catalog
from compass.cli import main
from compass.config import RunConfig
from compass.planner import EnumConfig, QuerySpec, SketchEstimator, build_join_graph, enumerate_plans
from compass.scan import evaluate, scan
from compass.sketch import SketchConfig

SMALL = ["--rows", "5", "--buckets", "64"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_json(path, data):
    path.write_text(json.dumps(data))
    return path


@pytest.fixture
def two_table(tmp_path):
    (tmp_path / "r.csv").write_text("id,x\n" + "".join(f"{i},{i % 7}\n" for i in range(40)))
    (tmp_path / "s.csv").write_text("id,y\n" + "".join(f"{i},{i % 5}\n" for i in range(30)))
    schema = write_json(
        tmp_path / "schema.json",
        {"r": {"columns": [{"name": "id"}, {"name": "x"}]}, "s": {"columns": [{"name": "id"}, {"name": "y"}]}},
    )
    query = write_json(
        tmp_path / "q.json",
        {
            "tables": [{"name": "r", "alias": "a"}, {"name": "s", "alias": "b", "predicate": {"op": "lt", "col": "id", "value": 20}}],
            "joins": [{"id": "e1", "left": "a.x", "right": "b.y"}],
        },
    )
    return tmp_path, schema, query


def ingest(capsys, base, schema, *csvs):
    return run(capsys, "ingest", "--catalog", base / "cat", "--schema", schema, *csvs)


def test_ingest_and_status(capsys, two_table):
    base, schema, _ = two_table
    (base / "u.csv").write_text("k\n")
    schema_doc = json.loads(schema.read_text())
    schema_doc["u"] = {"columns": [{"name": "k"}]}
    write_json(schema, schema_doc)
    code, out, _ = ingest(capsys, base, schema, base / "r.csv", base / "s.csv", base / "u.csv")
    assert code == 0 and "u: 0 rows" in out
    code, out, _ = run(capsys, "status", "--catalog", base / "cat")
    assert code == 0
    assert out.splitlines() == ["r\t40", "s\t30", "u\t0"]


def test_ingest_bad_row_reports_line(capsys, two_table):
    base, schema, _ = two_table
    (base / "r.csv").write_text("id,x\n1,2\n2,oops\n")
    code, _, err = ingest(capsys, base, schema, base / "r.csv")
    assert code == 1 and "line 3" in err


def test_ingest_from_schema_file_entries(capsys, two_table):
    base, schema, _ = two_table
    doc = json.loads(schema.read_text())
    doc["r"]["file"] = "r.csv"
    write_json(schema, doc)
    code, out, _ = ingest(capsys, base, schema)
    assert code == 0 and out.strip() == "r: 40 rows"


def test_user_errors_exit_one(capsys, two_table):
    base, schema, query = two_table
    assert run(capsys, "status", "--catalog", base / "nowhere")[0] == 1
    ingest(capsys, base, schema, base / "r.csv", base / "s.csv")
    assert run(capsys, "optimize", "--catalog", base / "cat", base / "missing.json")[0] == 1
    assert run(capsys, "optimize", "--catalog", base / "cat", "--mode", "fastest", query)[0] == 1
    assert run(capsys, "optimize", "--catalog", base / "cat", "--buckets", "100", query)[0] == 1
    bad = write_json(base / "bad.json", {"tables": [{"name": "zz", "alias": "z"}], "joins": []})
    assert run(capsys, "optimize", "--catalog", base / "cat", bad)[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["optimize", "--rows", "many"])
    assert exc.value.code == 1


def test_optimize_two_table_report(capsys, two_table):
    base, schema, query = two_table
    ingest(capsys, base, schema, base / "r.csv", base / "s.csv")
    code, out, _ = run(capsys, "optimize", "--catalog", base / "cat", *SMALL, query)
    assert code == 0
    rep = json.loads(out)
    assert rep["cardinalities"] == {"a": 40, "b": 20}
    plan = rep["plan"]
    assert plan["order"] == ["b", "a"] and len(plan["prefix_estimates"]) == 2
    assert plan["prefix_estimates"][0] == 20
    assert set(rep["timing"]) == {"scan_sketch_s", "enumeration_s", "total_s"}
    assert rep["config"]["sketch"] == {"rows": 5, "buckets": 64}
    assert rep["materialized"] == ["a", "b"]


def test_optimize_deterministic_apart_from_timing(capsys, two_table):
    base, schema, query = two_table
    ingest(capsys, base, schema, base / "r.csv", base / "s.csv")
    texts = []
    for i in range(2):
        out = base / f"rep{i}.json"
        assert run(capsys, "optimize", "--catalog", base / "cat", "--out", out, query)[0] == 0
        doc = json.loads(out.read_text())
        doc.pop("timing")
        texts.append(json.dumps(doc, sort_keys=True))
    assert texts[0] == texts[1]


def test_config_file_and_overrides(capsys, two_table):
    base, schema, query = two_table
    ingest(capsys, base, schema, base / "r.csv", base / "s.csv")
    cfg = RunConfig(master_seed=9, sketch=SketchConfig(3, 32), enum=EnumConfig.from_mode("exhaustive"))
    path = write_json(base / "cfg.json", cfg.to_json())
    code, out, _ = run(capsys, "optimize", "--catalog", base / "cat", "--config", path, "--seed", "4", query)
    conf = json.loads(out)["config"]
    assert code == 0 and conf["master_seed"] == 4 and conf["sketch"] == {"rows": 3, "buckets": 32}
    assert conf["enum"]["mode"] == "exhaustive"
    code, out, _ = run(capsys, "optimize", "--catalog", base / "cat", "--max-plans", "0", "--alpha", "0.2", query)
    conf = json.loads(out)["config"]["enum"]
    assert conf["mode"] == "exhaustive" and conf["alpha"] == 0.2


def test_job6a_plan_matches_offline_planner(capsys, tmp_path):
    cat = tmp_path / "cat"
    qpath = tmp_path / "q.json"
    assert run(capsys, "synth", "--catalog", cat, "--kind", "job6a", "--out", qpath)[0] == 0
    code, out, _ = run(capsys, "optimize", "--catalog", cat, "--workers", "2", qpath)
    assert code == 0
    cli_plan = json.loads(out)["plan"]

    # offline: filter first, then sketch the pre-filtered tables with no predicates
    spec = QuerySpec.from_json(json.loads(qpath.read_text()))
    catalog = Catalog(cat)
    cfg = RunConfig()
    results = {}
    for ref in spec.tables:
        table = catalog.load(ref.name)
        if ref.predicate is not None:
            table = table.take(evaluate(ref.predicate, table))
        results[ref.alias] = scan(table, None, spec.join_attrs(ref.alias), cfg.sketch, cfg.master_seed, workers=1)
    graph = build_join_graph(spec, results)
    sketches = {(a, e): sk for a, r in results.items() for e, sk in r.sketches.items()}
    offline = enumerate_plans(graph, cfg.enum, SketchEstimator(graph, sketches))
    assert cli_plan["order"] == list(offline.opt_path)
    assert cli_plan["prefix_estimates"] == offline.prefix_estimates


def test_estimation_failure_exits_two(capsys, tmp_path):
    cat, qpath = tmp_path / "cat", tmp_path / "q.json"
    run(capsys, "synth", "--catalog", cat, "--kind", "job6a", "--out", qpath)
    code, _, err = run(capsys, "optimize", "--catalog", cat, "--frontier-cap", "1", *SMALL, qpath)
    assert code == 2 and "frontier" in err


def test_bench_two_table_and_zero_truth(capsys, tmp_path):
    (tmp_path / "r.csv").write_text("k,j\n1,1\n2,1\n3,2\n")
    (tmp_path / "s.csv").write_text("k,j\n1,5\n1,5\n")
    (tmp_path / "u.csv").write_text("j\n7\n")
    cols = lambda *c: {"columns": [{"name": x} for x in c]}  # noqa: E731
    schema = write_json(tmp_path / "schema.json", {"r": cols("k", "j"), "s": cols("k", "j"), "u": cols("j")})
    run(capsys, "ingest", "--catalog", tmp_path / "cat", "--schema", schema, *(tmp_path / f"{t}.csv" for t in "rsu"))
    q1 = write_json(
        tmp_path / "pair.json",
        {"tables": [{"name": "r", "alias": "r"}, {"name": "s", "alias": "s"}], "joins": [{"id": "e", "left": "r.k", "right": "s.k"}]},
    )
    q2 = write_json(
        tmp_path / "chain.json",
        {
            "tables": [{"name": "r", "alias": "r"}, {"name": "s", "alias": "s"}, {"name": "u", "alias": "u"}],
            "joins": [{"id": "e", "left": "r.k", "right": "s.k"}, {"id": "f", "left": "s.j", "right": "u.j"}],
        },
    )
    out = tmp_path / "bench.json"
    code, _, _ = run(capsys, "bench", "--catalog", tmp_path / "cat", *SMALL, "--out", out, q1, q2)
    assert code == 0
    doc = json.loads(out.read_text())
    pair, chain = doc["reports"]
    assert len(pair["subplans"]) == 1 and pair["subplans"][0]["truth"] == 2
    assert pair["subplans"][0]["ratio"] == pytest.approx(pair["subplans"][0]["estimate"] / 2)
    zero = [s for s in chain["subplans"] if s["zero_truth"]]
    assert {tuple(s["vertices"]) for s in zero} == {("s", "u"), ("r", "s", "u")}
    assert all(s["ratio"] is None for s in zero)
    assert chain["summary"]["2"]["zero_truth"] == 1
    rows = list(csv.DictReader(out.with_suffix(".csv").open()))
    assert [r["query"] for r in rows] == ["pair", "chain", "chain", "chain"]


def test_bench_skips_guarded_query(capsys, tmp_path, monkeypatch):
    import compass.cli as cli

    cat, qpath = tmp_path / "cat", tmp_path / "q.json"
    run(capsys, "synth", "--catalog", cat, "--kind", "random", "--tables", "3", "--table-rows", "200", "--out", qpath)
    real = cli.ExactEstimator
    monkeypatch.setattr(cli, "ExactEstimator", lambda g, r: real(g, r, max_rows=1))
    code, out, err = run(capsys, "bench", "--catalog", cat, *SMALL, qpath)
    assert code == 0 and "skipping" in err
    assert json.loads(out)["reports"] == [] and len(json.loads(out)["skipped"]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "compass.cli", "status", "--catalog", str(tmp_path / "none")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 1 and "ingest" in proc.stderr


def test_synth_random_writes_catalog(capsys, tmp_path):
    code, out, _ = run(
        capsys, "synth", "--catalog", tmp_path / "c", "--kind", "random", "--tables", "4", "--table-rows", "50"
    )
    assert code == 0 and len(json.loads(out)["tables"]) == 4
    assert Catalog(tmp_path / "c").names() == ["t0", "t1", "t2", "t3"]
    assert np.all([Catalog(tmp_path / "c").row_count(t) == 50 for t in ("t0", "t3")])
