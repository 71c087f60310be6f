import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emd_expert.cli import cli_main
from emd_expert.errors import QueryError
from emd_expert.expert_db import (DesignRecord, ExpertDatabase, Predicted, parse_constraints,
                                  satisfies)
from emd_expert.guide import (REFERENCE_DESIGN, SpecQuery, compare_report, design_values,
                              parse_ranking_csv, query)
from emd_expert.wrsg import GeometryVars, derive_dependent, evaluate

from conftest import CASE_SPEC


def record(i, pout, w, eta, d2=200.0):
    x = GeometryVars(150.0, d2, 60.0, 22.0, 22.0, 6)
    return DesignRecord(i, x, derive_dependent(x), Predicted(pout, w, eta))


def test_case_spec_returns_matching_record():
    db = ExpertDatabase((record(0, 32.54, 15.36, 94.03, d2=204.22),
                         record(1, 29.0, 15.0, 95.0),
                         record(2, 33.0, 17.5, 95.0)), seed=0)
    r = query(db, SpecQuery.parse(CASE_SPEC))
    assert r.status == "ok" and [e[0].id for e in r.entries] == [0]
    assert r.entries[0][1] == pytest.approx(2.12, abs=5e-3)


def test_impossible_spec_is_no_solution():
    db = ExpertDatabase((record(0, 32.54, 15.36, 94.03),), seed=0)
    r = query(db, SpecQuery.parse("pout>1e6"))
    assert r.status == "no_solution" and len(r) == 0 and r.n_matching == 0


def test_top_one_is_best_power_density():
    # 30/15 = 2.0, 33/15 = 2.2, 20/9 = 2.222
    db = ExpertDatabase((record(0, 30, 15, 95), record(1, 33, 15, 95), record(2, 20, 9, 95)), 0)
    r = query(db, SpecQuery((), top_k=1))
    assert [e[0].id for e in r.entries] == [2]
    r = query(db, SpecQuery((), rank_by="pout", top_k=3))
    assert [e[0].id for e in r.entries] == [1, 0, 2]


def test_ties_break_on_lower_id():
    db = ExpertDatabase((record(0, 20, 10, 95), record(1, 40, 20, 95), record(2, 30, 15, 95)), 0)
    assert [e[0].id for e in query(db, SpecQuery(())).entries] == [0, 1, 2]


def test_query_validation():
    with pytest.raises(QueryError):
        SpecQuery((), top_k=0)
    with pytest.raises(QueryError):
        SpecQuery((), rank_by="cost")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["pout", "w", "eta", "d2", "n"]),
                          st.sampled_from([">", "<", ">=", "<="]),
                          st.integers(0, 10_000)), max_size=5))
def test_spec_round_trip(parts):
    text = ",".join(f"{q}{op}{v}" for q, op, v in parts)
    q = SpecQuery.parse(text)
    assert q.spec == text
    assert SpecQuery.parse(q.spec) == q


def test_pipeline_query(pipeline):
    q = SpecQuery.parse(CASE_SPEC, top_k=10)
    r = query(pipeline.db, q)
    assert r.status == "ok" and r.search_time < 1.0
    for rec, pd in r.entries:
        assert satisfies(rec, q.constraints, pipeline.db.boundaries)
        assert pd == rec.p_pred.power_density
    pds = [pd for _, pd in r.entries]
    assert pds == sorted(pds, reverse=True)


def test_csv_round_trip(pipeline):
    r = query(pipeline.db, SpecQuery.parse(CASE_SPEC))
    assert parse_ranking_csv(r.to_csv()) == r.rows()


def test_report_candidate_equals_reference():
    bundle = compare_report(REFERENCE_DESIGN, REFERENCE_DESIGN)
    assert all(row.abs_delta == 0 and row.rel_delta == 0 for row in bundle.rows)
    assert bundle.row("power_density").candidate == pytest.approx(30.05 / 15.11)
    assert "power_density" in bundle.to_text()


def test_report_with_oracle():
    x = GeometryVars(163.40, 204.95, 70.04, 22.12, 22.36, 7)
    m, _, p = evaluate(x)
    rec = DesignRecord(0, x, m, Predicted(p.pout_kva * 1.01, p.w_kg, p.eta_pct))
    bundle = compare_report(rec, REFERENCE_DESIGN, oracle=True)
    assert bundle.row("pout_kva").oracle_rel_err == pytest.approx(0.01, rel=1e-9)
    assert bundle.row("w_kg").oracle_rel_err == 0.0
    assert bundle.row("power_density").oracle == pytest.approx(p.pout_kva / p.w_kg)
    assert bundle.row("d2").oracle is None
    assert "oracle" in bundle.to_text() and bundle.to_csv().count("\n") == 11


def test_report_missing_fields():
    with pytest.raises(QueryError) as exc:
        design_values({"pout_kva": 1.0, "w_kg": 1.0})
    assert exc.value.code == "missing_fields"


# command line


@pytest.fixture(scope="module")
def cli_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli_main(["sample", "--out", str(d / "ds.jsonl")]) == 0
    assert cli_main(["train", "--data", str(d / "ds.jsonl"), "--out", str(d / "m.jsonl")]) == 0
    assert cli_main(["build-db", "--model", str(d / "m.jsonl"), "--out", str(d / "db.jsonl"),
                     "--plot-csv", str(d / "plot.csv")]) == 0
    return d


def test_cli_query_formats(cli_files, capsys):
    db = str(cli_files / "db.jsonl")
    assert cli_main(["query", "--db", db, "--spec", CASE_SPEC, "--format", "csv"]) == 0
    rows = parse_ranking_csv(capsys.readouterr().out)
    assert 1 <= len(rows) <= 6
    assert cli_main(["query", "--db", db, "--spec", CASE_SPEC, "--format", "lines"]) == 0
    lines = [json.loads(s) for s in capsys.readouterr().out.splitlines()]
    assert [r["id"] for r in lines] == [r["id"] for r in rows]


def test_cli_no_solution_still_succeeds(cli_files, capsys):
    assert cli_main(["query", "--db", str(cli_files / "db.jsonl"), "--spec", "pout>1e6"]) == 0
    assert "no_solution" in capsys.readouterr().err


def test_cli_verify_and_report(cli_files, capsys):
    db = str(cli_files / "db.jsonl")
    out = cli_files / "verify.json"
    assert cli_main(["verify", "--db", db, "--which", "sample:10:1", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["n_checked"] == 10
    assert cli_main(["report", "--db", db, "--id", "0", "--oracle"]) == 0
    assert "pred err" in capsys.readouterr().out
    assert cli_main(["report", "--db", db, "--id", "999999"]) == 1


def test_cli_constants_file(cli_files, tmp_path):
    good = tmp_path / "c.json"
    good.write_text('{"bg": 1.2}')
    assert cli_main(["sample", "--n", "20", "--out", str(tmp_path / "a.jsonl"),
                     "--constants-file", str(good)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"no_such_constant": 1}')
    assert cli_main(["sample", "--n", "20", "--out", str(tmp_path / "b.jsonl"),
                     "--constants-file", str(bad)]) == 1


def test_cli_exit_codes(tmp_path, capsys):
    assert cli_main([]) == 2
    assert cli_main(["query", "--db", "x", "--spec", "pout>1", "--bogus"]) == 2
    assert cli_main(["frobnicate"]) == 2
    assert cli_main(["query", "--db", str(tmp_path / "missing.jsonl"), "--spec", "pout>1"]) == 1
    assert cli_main(["query", "--db", str(tmp_path / "missing.jsonl"), "--spec", "bad"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err and "error:" in err
