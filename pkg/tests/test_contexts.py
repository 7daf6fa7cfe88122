import pytest
from hypothesis import given, strategies as st

from fjeucs.contexts import (EMPTY_CONTEXT, KCFA, ConstantContexts, context_name, make_context_policy,
                             parse_context, parse_region, phi, psi)
from fjeucs.syntax import Invoke


def test_psi_pairs_context_and_site():
    c = KCFA(1)
    r = psi(EMPTY_CONTEXT, 3, c)
    assert c.region_key(r) == ((), 3)
    assert psi(EMPTY_CONTEXT, 3, c) == r
    assert psi(EMPTY_CONTEXT, 4, c) != r
    assert psi((7,), 3, c) != r
    assert c.region_name(r) == "r3"
    assert c.region_name(psi((7, 2), 3, c)) == "r3[7.2]"


def test_phi_truncates():
    assert phi((5, 6), "C", 0, "m", 9, KCFA(0)) == ()
    assert phi((5, 6), "C", 0, "m", 9, KCFA(1)) == (9,)
    assert phi((1,), "C", 0, "m", 2, KCFA(2)) == (2, 1)
    assert phi((1, 3), "C", 0, "m", 2, KCFA(2)) == (2, 1)


@given(st.integers(0, 3), st.lists(st.integers(1, 50), max_size=4), st.integers(1, 50))
def test_phi_is_a_prefix_of_the_pushed_string(k, z, i):
    z = tuple(z)[:k]
    out = KCFA(k).phi(z, "C", 0, "m", i)
    assert len(out) <= k
    assert out == ((i,) + z)[:k]


def test_constant_policy():
    c = ConstantContexts()
    assert c.psi((1, 2), 3) == c.psi((), 9) == ConstantContexts.REGION
    assert c.phi((1,), "C", 0, "m", 4) == EMPTY_CONTEXT
    assert c.sites_of(c.REGION) is None
    assert c.region_name(c.REGION) == "r*"


def test_context_enumeration_bound(program):
    p = program("example1.fj")
    calls = [lab for lab, e in p.labels.items() if isinstance(e, Invoke)]
    for k in range(3):
        ctxs = KCFA(k).contexts(p)
        assert len(ctxs) == sum(len(calls) ** j for j in range(k + 1))
        assert len(set(ctxs)) == len(ctxs)


def test_regions_cover_sites(program):
    p = program("example1.fj")
    c = KCFA(0)
    regions = c.regions(p)
    assert {c.region_key(r)[1] for r in regions} == set(p.alloc_sites)


def test_context_names_round_trip():
    for z in [(), (3,), (3, 14)]:
        assert parse_context(context_name(z)) == z
    assert context_name(()) == "ε"


def test_parse_region_round_trip():
    c = KCFA(2)
    for z, i in [((), 1), ((4,), 2), ((4, 5), 3)]:
        r = c.psi(z, i)
        assert parse_region(c.region_name(r), c) == r
    with pytest.raises(ValueError):
        parse_region("bogus", c)
    k = ConstantContexts()
    assert parse_region("r*", k) == k.REGION


def test_make_context_policy():
    assert isinstance(make_context_policy("kcfa", 2), KCFA)
    assert isinstance(make_context_policy("constant"), ConstantContexts)
    with pytest.raises(ValueError):
        make_context_policy("3cfa")
    with pytest.raises(ValueError):
        KCFA(-1)
