import itertools

import pytest
from hypothesis import given, strategies as st

from fjeucs.lattice import (NULL_TYPE, LatticeElem, MethodSig, RefinedType, arg_atoms, atoms,
                            atoms_seq, join_elem, join_type, join_types, leq_elem, parse_type,
                            render_type, rtype, sig_leq, string_type, subtype, top_type)
from fjeucs.parser import parse_program

P = parse_program("class A { } class B extends A { }")
REGIONS = (0, 1, 2)
TAGS = (0, 1)


def subsets(xs):
    return [frozenset(c) for n in range(len(xs) + 1) for c in itertools.combinations(xs, n)]


def all_types():
    out = []
    for cls in ("A", "B"):
        out += [RefinedType(cls, r) for r in subsets(REGIONS)]
    out += [RefinedType("String", frozenset(), t) for t in subsets(TAGS)]
    out += [RefinedType("Object", r, t) for r in subsets(REGIONS) for t in subsets(TAGS)]
    return out


TYPES = all_types()


def test_type_count():
    assert len(TYPES) == 8 + 8 + 4 + 32


def test_subtype_partial_order():
    for a in TYPES:
        assert subtype(a, a, P)
    for a, b in itertools.product(TYPES, repeat=2):
        if subtype(a, b, P) and subtype(b, a, P):
            assert a == b
    sub = {(a, b) for a, b in itertools.product(TYPES, repeat=2) if subtype(a, b, P)}
    for a, b in sub:
        for c in TYPES:
            if (b, c) in sub:
                assert (a, c) in sub


def test_join_is_least_upper_bound():
    above = {a: [u for u in TYPES if subtype(a, u, P)] for a in TYPES}
    for a, b in itertools.product(TYPES, repeat=2):
        j = join_type(a, b, P)
        assert j == join_type(b, a, P)
        assert subtype(a, j, P) and subtype(b, j, P)
        for u in above[a]:
            if subtype(b, u, P):
                assert subtype(j, u, P)


def test_join_associative_idempotent():
    for a in TYPES:
        assert join_type(a, a, P) == a
    for a, b, c in itertools.product(TYPES[::3], repeat=3):
        assert join_type(join_type(a, b, P), c, P) == join_type(a, join_type(b, c, P), P)


def test_examples():
    red, green = "red", "green"
    assert subtype(rtype("B", [red]), rtype("B", [red, green]), P)
    for t in TYPES:
        assert subtype(NULL_TYPE, t, P)
    assert not subtype(string_type([0]), string_type([1]), P)
    assert join_type(rtype("B", [red]), rtype("B", [green]), P) == rtype("B", [red, green])
    assert join_type(rtype("B", [red]), string_type([1]), P) == RefinedType("Object", frozenset([red]),
                                                                             frozenset([1]))


def test_empty_join_is_top():
    top = top_type(REGIONS, TAGS)
    assert join_types([], P, top=top) == RefinedType("Object", frozenset(REGIONS), frozenset(TAGS))
    with pytest.raises(ValueError):
        join_types([], P)
    assert join_types(TYPES, P) == top


def test_string_cannot_carry_regions():
    with pytest.raises(ValueError):
        RefinedType("String", frozenset([0]))
    with pytest.raises(ValueError):
        RefinedType("A", frozenset(), frozenset([0]))


elems = st.builds(LatticeElem, st.sampled_from(TYPES), st.frozensets(st.sampled_from(TAGS)))


@given(elems, elems, elems)
def test_lattice_elem_join(a, b, c):
    j = join_elem(a, b, P)
    assert leq_elem(a, j, P) and leq_elem(b, j, P)
    assert j == join_elem(b, a, P)
    assert join_elem(j, c, P) == join_elem(a, join_elem(b, c, P), P)
    if leq_elem(a, c, P) and leq_elem(b, c, P):
        assert leq_elem(j, c, P)


def test_effect_union_example():
    t = rtype("A", [0])
    assert join_elem(LatticeElem(t, frozenset({0})), LatticeElem(t, frozenset({1})), P).effect == {0, 1}


# -- signatures -------------------------------------------------------------------

ATOMS = [RefinedType("A", frozenset([r])) for r in REGIONS] + [string_type([u]) for u in TAGS]
SIGS = [MethodSig((a,), r, e) for a in ATOMS for r in TYPES[:8] for e in subsets(TAGS)]


def test_sig_leq_preorder_and_antisymmetric_on_atomic_args():
    for s in SIGS:
        assert sig_leq(s, s, P)
    sample = SIGS[::5]
    for s1, s2 in itertools.product(sample, repeat=2):
        if sig_leq(s1, s2, P) and sig_leq(s2, s1, P):
            assert s1 == s2
        for s3 in sample[::7]:
            if sig_leq(s1, s2, P) and sig_leq(s2, s3, P):
                assert sig_leq(s1, s3, P)


def test_sig_leq_contravariant_in_arguments():
    narrow = MethodSig((rtype("A", [0]),), rtype("A", [0]), frozenset({0}))
    wide = MethodSig((rtype("A", [0, 1]),), rtype("A", [0]), frozenset({0}))
    assert sig_leq(wide, narrow, P)
    assert not sig_leq(narrow, wide, P)


# -- atoms and text form ------------------------------------------------------------


def test_atoms():
    assert atoms(rtype("A", ["r"])) == {rtype("A", ["r"])}
    assert atoms(rtype("A", ["r", "s"])) == {rtype("A", ["r"]), rtype("A", ["s"])}
    assert len(atoms_seq([rtype("A", [0, 1]), rtype("B", [1, 2])])) == 4
    assert arg_atoms(RefinedType("A")) == [RefinedType("A")]


@given(st.sampled_from(TYPES))
def test_render_parse_round_trip(t):
    text = render_type(t, lambda r: f"r{r}", lambda u: f"u{u}")
    back = parse_type(text, lambda s: int(s[1:]), lambda s: int(s[1:]))
    assert back == t


def test_render_forms():
    assert render_type(rtype("A", ["r1", "r2"])) == "A@{r1,r2}"
    assert render_type(string_type(["T"])) == "String@{T}"
    assert render_type(RefinedType("Object", frozenset(["r"]), frozenset(["T"]))) == "Object@{r|T}"
    with pytest.raises(ValueError):
        parse_type("A{r}")
