import dataclasses
import json
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings, strategies as st

from fjeucs.contexts import KCFA
from fjeucs.harness import (GenBounds, fuzz_campaign, fuzz_one, generate_program, generate_source,
                            heap_typing_check, policy_builtins, soundness_check, summary_json,
                            summary_junit)
from fjeucs.infer import analyze
from fjeucs.interp import SObj, run_entry
from fjeucs.lattice import LatticeElem, string_type
from fjeucs.parser import parse_program
from fjeucs.syntax import check_wellformed


# -- soundness checks on fixed programs ---------------------------------------------


def test_literal_program_sees_only_neutral(taint):
    p = parse_program('class A { String m() { return "x"; } }')
    rep = soundness_check(p, ("A", "m"), taint, KCFA(1))
    assert rep.ok and rep.exhaustive
    assert rep.effect == rep.classes_seen == ["U"]
    assert rep.runs == rep.terminated == 1


def test_example1_is_sound(program, taint):
    rep = soundness_check(program("example1.fj"), ("C", "main"), taint, KCFA(1))
    assert rep.ok and rep.exhaustive and rep.terminated == rep.runs
    assert rep.classes_seen == ["U"]


def test_example2_violation_is_predicted(program, taint):
    rep = soundness_check(program("example2.fj"), ("Servlet", "doGet"), taint, KCFA(1))
    assert rep.ok
    assert "T" in rep.classes_seen and "T" in rep.effect
    assert not {taint.element(x) for x in rep.effect} <= taint.allowed


@pytest.mark.parametrize("name, pol, entry", [
    ("auth.fj", "auth", ("Authorization", "main")),
    ("sanitize_bad.fj", "sanitize", ("Page", "render")),
    ("fjsec.fj", "taint", ("FJsec", "m_bad")),
    ("strong_updates3.fj", "taint", ("Servlet", "doGet")),
])
def test_corpus_programs_are_sound(request, program, name, pol, entry):
    pol = request.getfixturevalue(pol)
    rep = soundness_check(program(name), entry, pol, KCFA(1), budget=128)
    assert rep.ok, rep
    assert rep.terminated > 0
    assert set(rep.classes_seen) <= set(rep.effect)


def test_seeded_sampling_is_reproducible(program, sanitize):
    p = program("sanitize_bad.fj")
    a = soundness_check(p, ("Page", "render"), sanitize, KCFA(1), budget=20, seed=7)
    b = soundness_check(p, ("Page", "render"), sanitize, KCFA(1), budget=20, seed=7)
    assert a == b and a.runs == 20


def test_budget_limits_enumeration(program, taint):
    rep = soundness_check(program("example2.fj"), ("Servlet", "doGet"), taint, KCFA(1), budget=1)
    assert rep.runs == 1 and not rep.exhaustive


def test_analysis_errors_are_reported(taint):
    p = parse_program('class A { } class M { String m() { Object o = new A(); return putString(o); } }')
    rep = soundness_check(p, ("M", "m"), taint, KCFA(1))
    assert not rep.ok and "analysis failed" in rep.error


def test_stuck_runs_are_counted(taint):
    p = parse_program('class A { } class B { } class M { String m() { Object o = new A(); '
                      'B b = (B) o; return ""; } }')
    rep = soundness_check(p, ("M", "m"), taint, KCFA(1))
    assert rep.ok and rep.stuck == 1 and rep.stuck_kinds == {"cast-failure": 1}


# -- the harness catches unsound analyses ------------------------------------------------


def test_understated_effect_is_a_counterexample(program, taint):
    p = program("example2.fj")
    an = analyze(p, taint, KCFA(1), [("Servlet", "doGet")])
    U = taint.element("U")
    fake = dataclasses.replace(an, results=[LatticeElem(r.type, frozenset([U])) for r in an.results])
    rep = soundness_check(p, ("Servlet", "doGet"), taint, KCFA(1), analysis=fake)
    assert not rep.ok
    assert rep.counterexamples and rep.counterexamples[0].trace_class == "T"


def test_understated_field_typing_is_a_heap_diagnostic(program, taint):
    p = program("example1.fj")
    an = analyze(p, taint, KCFA(1), [("C", "main")])
    U = taint.element("U")
    for key in an.table.F:
        an.table.F[key] = string_type([U])
    rep = soundness_check(p, ("C", "main"), taint, KCFA(1), analysis=an)
    assert not rep.counterexamples
    assert any("field s" in d and "not below" in d for d in rep.heap_diagnostics)


# -- heap typing --------------------------------------------------------------------------


def test_empty_heap_typing_has_no_diagnostics(taint):
    p = parse_program('class A { String m() { return null; } }')
    an = analyze(p, taint, KCFA(1), [("A", "m")])
    r = run_entry(p, taint, "A", "m", ctxpol=KCFA(1))
    assert heap_typing_check(r, an.table, result_type=an.results[0].type) == []


def test_example1_heap_typing(program, taint):
    p, ctx = program("example1.fj"), KCFA(1)
    an = analyze(p, taint, ctx, [("C", "main")])
    r = run_entry(p, taint, "C", "main", ctxpol=ctx)
    assert heap_typing_check(r, an.table, result_type=an.results[0].type) == []


def test_flipped_tag_word_is_diagnosed(program, taint):
    p, ctx = program("example1.fj"), KCFA(1)
    an = analyze(p, taint, ctx, [("C", "main")])
    r = run_entry(p, taint, "C", "main", ctxpol=ctx)
    loc = next(l for l, c in r.heap.items() if isinstance(c, SObj) and c.word == ("ok",))
    r.heap[loc] = SObj(r.heap[loc].text, ("user",))
    diags = heap_typing_check(r, an.table)
    assert any(d.startswith(f"l{loc}: string typed U") for d in diags)


# -- generator -----------------------------------------------------------------------------


def test_generator_is_deterministic():
    assert generate_source(11) == generate_source(11)
    assert generate_source(11) != generate_source(12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_programs_are_well_formed(seed):
    p = generate_program(seed)
    assert check_wellformed(p) == []
    assert ("Main", "main") in p.mtable
    assert len([c for c in p.classes if c.startswith("K")]) <= GenBounds().classes


def test_generator_uses_policy_builtins(sanitize):
    names = policy_builtins(sanitize)
    srcs = " ".join(generate_source(s, builtins=names) for s in range(30))
    assert any(f"{b}(" in srcs for b in names if b not in ("getString", "putString"))


def test_generated_runs_mostly_terminate(taint):
    cases = fuzz_campaign(range(40), [1], taint, budget=4)
    runs = sum(c.runs for c in cases)
    assert all(c.ok for c in cases), [c for c in cases if not c.ok]
    assert sum(c.terminated for c in cases) >= 0.3 * runs


# -- summaries ----------------------------------------------------------------------------


def test_summaries(taint):
    cases = [fuzz_one(s, 0, taint, budget=2) for s in range(3)]
    bad = dataclasses.replace(cases[0], seed=99, counterexamples=1, detail="trace ('user',) has class T")
    err = dataclasses.replace(cases[0], seed=100, error="generator: boom")
    doc = json.loads(summary_json(cases + [bad, err]))
    assert doc["schema"] == "fjeucs-fuzz/1"
    assert doc["summary"]["cases"] == 5 and doc["summary"]["failures"] == 2
    suite = ET.fromstring(summary_junit(cases + [bad, err]))
    assert suite.get("tests") == "5" and suite.get("failures") == "1" and suite.get("errors") == "1"
    failing = [tc.get("name") for tc in suite if tc.find("failure") is not None]
    assert failing == ["seed99"]
