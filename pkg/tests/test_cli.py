import json
import subprocess
import sys

import pytest

from fjeucs.cli import (EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, bundled_corpus, main,
                        resolve_policy, run_corpus)

CORPUS = bundled_corpus()

EX1 = str(CORPUS / "example1.fj")
EX1_BAD = str(CORPUS / "example1_mutated.fj")
EX2 = str(CORPUS / "example2.fj")


def cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# -- check -------------------------------------------------------------------------


def test_check_ok_and_violation(capsys):
    code, out, _ = cli(capsys, "check", EX1, "--policy", "taint", "--entry", "C.main")
    assert code == EXIT_OK and out.startswith("verdict: OK")
    code, out, _ = cli(capsys, "check", EX1_BAD, "--policy", "taint", "--entry", "C.main")
    assert code == EXIT_VIOLATION and "VIOLATION" in out


def test_check_json(capsys):
    code, out, _ = cli(capsys, "check", EX2, "--policy", CORPUS / "taint.policy",
                       "--entry", "Servlet.doGet", "--json")
    rep = json.loads(out)
    assert code == EXIT_VIOLATION
    assert rep["verdict"] == "VIOLATION" and rep["witnesses"] == ["T"]
    assert rep["sites"] and rep["sites"][0]["builtin"] == "putString"


def test_check_context_options(capsys):
    assert cli(capsys, "check", EX1, "--policy", "taint", "--entry", "C.main", "--k", "0")[0] == EXIT_OK
    code, _, _ = cli(capsys, "check", EX1, "--policy", "taint", "--entry", "C.main",
                     "--context-policy", "constant")
    assert code == EXIT_VIOLATION


@pytest.mark.parametrize("argv", [
    ["check", EX1, "--policy", "nope", "--entry", "C.main"],
    ["check", "missing.fj", "--policy", "taint", "--entry", "C.main"],
    ["check", EX1, "--policy", "taint"],
    ["check", EX1, "--policy", "taint", "--entry", "C"],
    ["check", EX1, "--policy", "taint", "--entry", "C.nothere"],
    ["check", EX1, "--entry", "C.main"],
    [],
    ["frobnicate"],
])
def test_usage_errors(capsys, argv):
    assert cli(capsys, *argv)[0] == EXIT_USAGE


def test_parse_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.fj"
    bad.write_text("class A { String m() { return ; } }")
    code, _, err = cli(capsys, "check", bad, "--policy", "taint", "--entry", "A.m")
    assert code == EXIT_USAGE and "error:" in err


def test_internal_errors_exit_3(capsys, monkeypatch):
    import fjeucs.cli as c
    monkeypatch.setattr(c, "analyze", lambda *a, **k: 1 / 0)
    code, _, err = cli(capsys, "check", EX1, "--policy", "taint", "--entry", "C.main")
    assert code == EXIT_INTERNAL and "ZeroDivisionError" in err


def test_help_exits_0(capsys):
    assert cli(capsys, "--help")[0] == 0


# -- tables ----------------------------------------------------------------------------


def test_dump_and_audit_table(tmp_path, capsys):
    table = tmp_path / "t.txt"
    cli(capsys, "check", EX1_BAD, "--policy", "taint", "--entry", "C.main", "--dump-table", table)
    assert table.read_text().startswith("# fjeucs class table")
    code, out, _ = cli(capsys, "audit-table", table, "--program", EX1_BAD)
    assert code == EXIT_OK and "table OK" in out
    code, out, _ = cli(capsys, "audit-table", table, "--program", EX1_BAD,
                       "--policy", "taint", "--entry", "C.main")
    assert code == EXIT_OK, out


def test_audit_table_reports_understated_effect(tmp_path, capsys):
    table = tmp_path / "t.txt"
    cli(capsys, "check", EX1_BAD, "--policy", "taint", "--entry", "C.main", "--dump-table", table)
    lines = [ln.replace("! {T}", "! {U}") if ln.startswith("method main") else ln
             for ln in table.read_text().splitlines()]
    table.write_text("\n".join(lines) + "\n")
    code, out, _ = cli(capsys, "audit-table", table, "--program", EX1_BAD,
                       "--policy", "taint", "--entry", "C.main", "--json")
    doc = json.loads(out)
    assert code == EXIT_VIOLATION and not doc["ok"]


def test_audit_table_errors(tmp_path, capsys):
    assert cli(capsys, "audit-table", tmp_path / "none", "--program", EX1)[0] == EXIT_USAGE
    bad = tmp_path / "bad.txt"
    bad.write_text("garbage\n")
    assert cli(capsys, "audit-table", bad, "--program", EX1)[0] == EXIT_USAGE


# -- run -----------------------------------------------------------------------------------


def test_run(capsys):
    code, out, _ = cli(capsys, "run", EX1, "--policy", "taint", "--entry", "C.main", "--json")
    doc = json.loads(out)
    assert code == EXIT_OK
    assert doc["status"] == "terminated" and doc["trace"] == ["ok"] and doc["allowed"]
    code, out, _ = cli(capsys, "run", EX2, "--policy", "taint", "--entry", "Servlet.doGet")
    assert code == EXIT_VIOLATION and "trace_class: T" in out


def test_run_out_of_fuel_and_stuck(tmp_path, capsys):
    loop = tmp_path / "loop.fj"
    loop.write_text("class L { String go() { return this.go(); } }")
    code, out, _ = cli(capsys, "run", loop, "--policy", "taint", "--entry", "L.go", "--fuel", 100)
    assert code == EXIT_VIOLATION and "out-of-fuel" in out
    cast = tmp_path / "cast.fj"
    cast.write_text("class A { } class B { } class M { Object m() { Object o = new A(); return (B) o; } }")
    code, out, _ = cli(capsys, "run", cast, "--policy", "taint", "--entry", "M.m", "--json")
    assert code == EXIT_VIOLATION and json.loads(out)["kind"] == "cast-failure"


def test_run_with_seed_is_reproducible(capsys):
    argv = ["run", str(CORPUS / "sanitize_bad.fj"), "--policy", "sanitize", "--entry", "Page.render",
            "--seed", "3", "--json"]
    assert cli(capsys, *argv) == cli(capsys, *argv)


# -- fuzz, monoids, corpus -------------------------------------------------------------------


def test_fuzz(tmp_path, capsys):
    junit = tmp_path / "j.xml"
    code, out, _ = cli(capsys, "fuzz", "--count", 5, "--ks", "0,1", "--budget", 4, "--json",
                       "--junit", junit)
    doc = json.loads(out)
    assert code == EXIT_OK
    assert doc["summary"]["cases"] == 10 and doc["summary"]["failures"] == 0
    assert junit.read_text().startswith("<testsuite")
    assert cli(capsys, "fuzz", "--ks", "one")[0] == EXIT_USAGE


def test_dump_monoid(capsys):
    code, out, _ = cli(capsys, "dump-monoid", "--policy", "taint", "--json")
    doc = json.loads(out)
    assert code == EXIT_OK
    assert doc["elements"] == ["T", "U"] and doc["neutral"] == "U"
    assert doc["table"] == [["T", "T"], ["T", "U"]]
    code, out, _ = cli(capsys, "dump-monoid", "--policy", "auth")
    assert out.startswith(f"# {resolve_policy('auth').monoid.size} elements")


def test_corpus_bundled(capsys):
    code, out, _ = cli(capsys, "corpus")
    assert code == EXIT_OK
    assert out.rstrip().endswith("cases match")
    assert "MISMATCH" not in out


def test_corpus_mismatch_and_errors(tmp_path, capsys):
    (tmp_path / "a.fj").write_text((CORPUS / "example1_mutated.fj").read_text())
    (tmp_path / "taint.policy").write_text((CORPUS / "taint.policy").read_text())
    (tmp_path / "MANIFEST").write_text("# claims the wrong verdict\na.fj taint.policy C.main OK k=1\n")
    code, out, _ = cli(capsys, "corpus", tmp_path, "--json")
    (row,) = json.loads(out)
    assert code == EXIT_VIOLATION and row["actual"] == "BAD" and not row["match"]
    (tmp_path / "MANIFEST").write_text("a.fj taint.policy\n")
    assert cli(capsys, "corpus", tmp_path)[0] == EXIT_USAGE
    assert cli(capsys, "corpus", tmp_path / "nowhere")[0] == EXIT_USAGE


def test_corpus_empty_directory(tmp_path, capsys):
    code, out, _ = cli(capsys, "corpus", tmp_path)
    assert code == EXIT_OK and "0/0 cases match" in out
    assert run_corpus(tmp_path) == []


def test_corpus_parallel_matches_serial():
    serial = [(r.case, r.entry, r.options, r.actual) for r in run_corpus(CORPUS)]
    parallel = [(r.case, r.entry, r.options, r.actual) for r in run_corpus(CORPUS, jobs=2)]
    assert serial == parallel


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "fjeucs", "check", EX1, "--policy", "taint",
                          "--entry", "C.main"], capture_output=True, text=True)
    assert out.returncode == EXIT_OK and out.stdout.startswith("verdict: OK")
