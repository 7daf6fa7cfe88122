"""Refined types ``C_R``, the type-and-effect semilattice and method signatures.

A region set is kept as two disjoint components: ordinary regions (any
hashable, interned ints during analysis) and string tags (monoid element
indices).  ``String`` types carry only tags, ordinary classes only regions;
``Object`` may carry both after joining a string with an ordinary object.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Hashable, Iterable, Optional

from .syntax import NULLTYPE, OBJECT, STRING, Program

EMPTY: frozenset = frozenset()


@dataclass(frozen=True)
class RefinedType:
    cls: str
    regions: frozenset = EMPTY
    tags: frozenset = EMPTY

    def __post_init__(self):
        if self.cls == STRING and self.regions:
            raise ValueError("String types carry monoid tags, not regions")
        if self.cls not in (STRING, OBJECT) and self.tags:
            raise ValueError(f"{self.cls} types cannot carry string tags")

    @property
    def is_mixed(self) -> bool:
        return bool(self.regions) and bool(self.tags)

    @property
    def is_empty(self) -> bool:
        return not self.regions and not self.tags

    def with_sets(self, regions=None, tags=None) -> "RefinedType":
        return RefinedType(self.cls,
                           self.regions if regions is None else frozenset(regions),
                           self.tags if tags is None else frozenset(tags))


def rtype(cls: str, regions: Iterable[Hashable] = (), tags: Iterable[int] = ()) -> RefinedType:
    return RefinedType(cls, frozenset(regions), frozenset(tags))


def string_type(tags: Iterable[int]) -> RefinedType:
    return RefinedType(STRING, EMPTY, frozenset(tags))


NULL_TYPE = RefinedType(NULLTYPE)


@dataclass(frozen=True)
class LatticeElem:
    type: RefinedType
    effect: frozenset = EMPTY


@dataclass(frozen=True)
class MethodSig:
    args: tuple[RefinedType, ...]
    result: RefinedType
    effect: frozenset = EMPTY


def subtype(t1: RefinedType, t2: RefinedType, p: Program) -> bool:
    return (p.subclass_of(t1.cls, t2.cls)
            and t1.regions <= t2.regions and t1.tags <= t2.tags)


def subtype_seq(ts1, ts2, p: Program) -> bool:
    return len(ts1) == len(ts2) and all(subtype(a, b, p) for a, b in zip(ts1, ts2))


def join_type(t1: RefinedType, t2: RefinedType, p: Program) -> RefinedType:
    if t1 == t2:
        return t1
    return RefinedType(p.lcs(t1.cls, t2.cls), t1.regions | t2.regions, t1.tags | t2.tags)


def top_type(regions: Iterable[Hashable], tags: Iterable[int]) -> RefinedType:
    return RefinedType(OBJECT, frozenset(regions), frozenset(tags))


def join_types(ts: Iterable[RefinedType], p: Program,
               top: Optional[RefinedType] = None) -> RefinedType:
    """Join of a finite set of types; the empty join is ``top`` (Object over all regions)."""
    out = None
    for t in ts:
        out = t if out is None else join_type(out, t, p)
    if out is None:
        if top is None:
            raise ValueError("empty join needs the region universe (pass top=...)")
        return top
    return out


def leq_elem(l1: LatticeElem, l2: LatticeElem, p: Program) -> bool:
    return subtype(l1.type, l2.type, p) and l1.effect <= l2.effect


def join_elem(l1: LatticeElem, l2: LatticeElem, p: Program) -> LatticeElem:
    return LatticeElem(join_type(l1.type, l2.type, p), l1.effect | l2.effect)


def sig_leq(s1: MethodSig, s2: MethodSig, p: Program) -> bool:
    """``s1`` is a better signature than ``s2``: wider args, smaller result and effect."""
    return (subtype_seq(s2.args, s1.args, p)
            and subtype(s1.result, s2.result, p) and s1.effect <= s2.effect)


def atoms(t: RefinedType) -> set[RefinedType]:
    out = {RefinedType(t.cls, frozenset([r])) for r in t.regions}
    out |= {RefinedType(t.cls, EMPTY, frozenset([u])) for u in t.tags}
    return out


def atoms_seq(ts: Iterable[RefinedType]) -> set[tuple[RefinedType, ...]]:
    return set(product(*[sorted(atoms(t), key=_atom_key) for t in ts]))


def arg_atoms(t: RefinedType) -> list[RefinedType]:
    """Atoms used to key method summaries; a provably-null type is its own atom."""
    if t.is_empty:
        return [t]
    return sorted(atoms(t), key=_atom_key)


def _atom_key(t: RefinedType):
    return (t.cls, sorted(map(repr, t.regions)), sorted(t.tags))


def is_atomic(t: RefinedType) -> bool:
    return len(t.regions) + len(t.tags) == 1


# --------------------------------------------------------------------------
# Rendering: ``C@{r1,r2}``, ``String@{T}``, ``Object@{r1|T}``
# --------------------------------------------------------------------------


def render_type(t: RefinedType, region_name: Callable[[Hashable], str] = str,
                tag_name: Callable[[int], str] = str) -> str:
    regs = ",".join(sorted(region_name(r) for r in t.regions))
    tags = ",".join(sorted(tag_name(u) for u in t.tags))
    if t.cls == STRING:
        return f"{t.cls}@{{{tags}}}"
    if t.cls == OBJECT and t.tags:
        return f"{t.cls}@{{{regs}|{tags}}}"
    return f"{t.cls}@{{{regs}}}"


def parse_type(text: str, region_of: Callable[[str], Hashable] = str,
               tag_of: Callable[[str], int] = str) -> RefinedType:
    """Inverse of :func:`render_type`."""
    text = text.strip()
    cls, _, rest = text.partition("@")
    if not rest.startswith("{") or not rest.endswith("}"):
        raise ValueError(f"malformed refined type {text!r}")
    body = rest[1:-1]

    def items(s):
        return [x for x in s.split(",") if x]

    if cls == STRING:
        return RefinedType(cls, EMPTY, frozenset(tag_of(x) for x in items(body)))
    regs, bar, tags = body.partition("|")
    return RefinedType(cls, frozenset(region_of(x) for x in items(regs)),
                       frozenset(tag_of(x) for x in items(tags)) if bar else EMPTY)
