import itertools

import pytest
from hypothesis import given, strategies as st

from fjeucs.parser import parse_program
from fjeucs.syntax import (NULLTYPE, OBJECT, STRING, Invoke, Let, New, Null, Program, StrLit, Var,
                           check_wellformed, entry_expr, label_expr, least_common_superclass,
                           parse_entry, subclass_of, walk)


def make(subclass, fields=None, methods=None, mtable=None, arity=None):
    return Program(classes=frozenset(d for d, _ in subclass) - {STRING},
                   subclass=frozenset(subclass) | {(STRING, OBJECT)},
                   fields={c: frozenset(v) for c, v in (fields or {}).items()},
                   methods={c: frozenset(v) for c, v in (methods or {}).items()},
                   mtable=mtable or {}, arity=arity or {})


def test_example1_is_wellformed(program):
    p = program("example1.fj")
    assert check_wellformed(p) == []
    assert p.fields["D"] == frozenset({"s"})
    assert p.methods["D"] == frozenset({"cD"})


@pytest.mark.parametrize("name", ["example1.fj", "example1_mutated.fj", "example2.fj", "auth.fj",
                                  "auth_ok.fj", "sanitize_ok.fj", "sanitize_bad.fj",
                                  "sanitize_script.fj", "strong_updates3.fj", "pred.fj",
                                  "aliasing3.fj", "fjsec.fj", "null_print.fj"])
def test_corpus_wellformed(program, name):
    assert check_wellformed(program(name)) == []


def test_cycle_is_not_a_tree():
    p = make([("A", "B"), ("B", "A")])
    assert any("subclass relation not a tree" in d for d in check_wellformed(p))


def test_two_parents_is_not_a_tree():
    p = make([("A", OBJECT), ("B", OBJECT), ("C", "A"), ("C", "B")])
    assert any("not a tree" in d for d in check_wellformed(p))


def test_field_inheritance_violated():
    p = make([("C", OBJECT), ("D", "C")], fields={"C": {"f"}, "D": set()})
    assert any("field inheritance violated" in d for d in check_wellformed(p))


def test_string_cannot_have_fields():
    p = make([("C", OBJECT)], fields={STRING: {"f"}})
    assert any("String may not have fields" in d for d in check_wellformed(p))


def test_duplicate_labels_reported():
    body = Let("x", New("C", label=2), Var("x", label=2), label=1)
    p = make([("C", OBJECT)], methods={"C": {"m"}}, mtable={("C", "m"): body}, arity={"m": 0})
    assert any("label 2 appears 2 times" in d for d in check_wellformed(p))


def test_missing_mtable_entry():
    p = make([("C", OBJECT)], methods={"C": {"m"}}, arity={"m": 0})
    assert any("mtable(C, m) undefined" in d for d in check_wellformed(p))


def test_new_string_rejected_in_ast():
    body = New(STRING, label=1)
    p = make([("C", OBJECT)], methods={"C": {"m"}}, mtable={("C", "m"): body}, arity={"m": 0})
    assert any("cannot instantiate String" in d for d in check_wellformed(p))


def test_free_variables_reported():
    p = make([("C", OBJECT)], methods={"C": {"m"}}, mtable={("C", "m"): Var("y", label=1)},
             arity={"m": 0})
    assert any("free variables" in d for d in check_wellformed(p))


HIER = make([("A", OBJECT), ("B", "A"), ("C", "A"), ("D", "B")])


def test_subclass_examples():
    assert subclass_of("C", "C", HIER)
    assert subclass_of(NULLTYPE, STRING, HIER)
    assert not subclass_of(OBJECT, STRING, HIER)
    assert subclass_of("D", "A", HIER)
    assert not subclass_of("A", "D", HIER)


def test_lcs_examples():
    assert least_common_superclass("D", "D", HIER) == "D"
    assert least_common_superclass(STRING, "B", HIER) == OBJECT
    assert least_common_superclass(NULLTYPE, "C", HIER) == "C"
    assert least_common_superclass("D", "C", HIER) == "A"


def test_undeclared_class_raises():
    with pytest.raises(KeyError):
        subclass_of("Nope", OBJECT, HIER)
    with pytest.raises(KeyError):
        least_common_superclass("Nope", "A", HIER)


CLASSES = sorted(HIER.all_classes)


def test_subclass_is_partial_order():
    for a, b, c in itertools.product(CLASSES, repeat=3):
        assert subclass_of(a, a, HIER)
        if subclass_of(a, b, HIER) and subclass_of(b, a, HIER):
            assert a == b
        if subclass_of(a, b, HIER) and subclass_of(b, c, HIER):
            assert subclass_of(a, c, HIER)


def test_lcs_is_least_upper_bound():
    for a, b in itertools.product(CLASSES, repeat=2):
        e = least_common_superclass(a, b, HIER)
        assert subclass_of(a, e, HIER) and subclass_of(b, e, HIER)
        for u in CLASSES:
            if subclass_of(a, u, HIER) and subclass_of(b, u, HIER):
                assert subclass_of(e, u, HIER)


@given(st.sampled_from(CLASSES), st.sampled_from(CLASSES), st.sampled_from(CLASSES))
def test_lcs_algebra(a, b, c):
    lcs = lambda x, y: least_common_superclass(x, y, HIER)  # noqa: E731
    assert lcs(a, b) == lcs(b, a)
    assert lcs(lcs(a, b), c) == lcs(a, lcs(b, c))
    assert lcs(a, a) == a


def test_label_expr_is_preorder():
    e = Let("x", StrLit("a"), Let("y", Null(), Var("x")))
    out, nxt = label_expr(e, 5)
    assert [n.label for n in walk(out)] == [5, 6, 7, 8, 9]
    assert nxt == 10


def test_parser_labels_preorder_and_unique(program):
    p = program("example2.fj")
    labels = [n.label for body in p.bodies() for n in walk(body)]
    assert len(labels) == len(set(labels))
    for body in p.bodies():
        seq = [n.label for n in walk(body)]
        assert seq == list(range(seq[0], seq[0] + len(seq)))


def test_entry_expr_builds_fresh_arguments():
    p = parse_program("class A { String m(String s, A a) { return s; } }")
    e = entry_expr(p, "A", "m")
    nodes = list(walk(e))
    assert nodes[0].label == p.max_label + 1
    kinds = [type(n).__name__ for n in nodes]
    assert kinds.count("New") == 2 and kinds.count("StrLit") == 1
    assert isinstance(nodes[-1], Invoke) and nodes[-1].args == ("main$arg1", "main$arg2")
    with pytest.raises(KeyError):
        entry_expr(p, "A", "nope")


def test_parse_entry():
    assert parse_entry("C.main") == ("C", "main")
    for bad in ("C", ".m", "C."):
        with pytest.raises(ValueError):
            parse_entry(bad)
