"""Guideline semantics: finite monoids, tag homomorphisms and builtin methods.

A policy fixes an alphabet of tag/event letters, a finite monoid with a
homomorphism from words, the set of allowed monoid elements, a tagging
rule for string literals and a collection of string builtins.  Builtins
are described by a small rule language (see :class:`Outcome`) from which
their monoid typing is derived.
"""

from __future__ import annotations

import html
import random
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Iterable, Mapping, Optional, Protocol, Sequence, Union

import numpy as np


class PolicyError(ValueError):
    pass


Word = tuple[str, ...]
EPS: Word = ()


# --------------------------------------------------------------------------
# Monoids
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Monoid:
    """Finite monoid over elements ``0..n-1``; ``table[a, b]`` is ``a*b``."""

    names: tuple[str, ...]
    table: np.ndarray
    neutral: int

    def __post_init__(self):
        n = len(self.names)
        if self.table.shape != (n, n):
            raise PolicyError("multiplication not total")
        if len(set(self.names)) != n:
            raise PolicyError("duplicate monoid element names")
        self.table.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def elements(self) -> range:
        return range(len(self.names))

    def mul(self, a: int, b: int) -> int:
        return int(self.table[a, b])

    def prod(self, elems: Iterable[int]) -> int:
        out = self.neutral
        for e in elems:
            out = int(self.table[out, e])
        return out

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise PolicyError(f"unknown monoid element {name!r}") from None

    def law_violations(self) -> list[str]:
        """Exhaustive check of closure, identity and associativity."""
        n = self.size
        t = self.table
        out = []
        if t.min() < 0 or t.max() >= n:
            return ["multiplication table not closed"]
        idx = np.arange(n)
        if not (np.array_equal(t[self.neutral], idx) and np.array_equal(t[:, self.neutral], idx)):
            out.append("neutral element is not a two-sided identity")
        left = t[t[:, :, None], idx[None, None, :]]
        right = t[idx[:, None, None], t[None, :, :]]
        bad = np.argwhere(left != right)
        if len(bad):
            a, b, c = bad[0]
            out.append(f"not associative: ({self.names[a]}*{self.names[b]})*{self.names[c]}")
        return out

    def tsv(self) -> str:
        rows = ["*\t" + "\t".join(self.names)]
        for a in self.elements:
            rows.append(self.names[a] + "\t" + "\t".join(self.names[self.mul(a, b)] for b in self.elements))
        return "\n".join(rows) + "\n"


def effect_concat(u1: Iterable[int], u2: Iterable[int], m: Monoid) -> frozenset[int]:
    """Pointwise product ``{u*v | u in U1, v in U2}``."""
    u2 = tuple(u2)
    return frozenset(int(m.table[a, b]) for a in u1 for b in u2)


# --------------------------------------------------------------------------
# Automata and their transition monoids
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyAutomaton:
    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    initial: str
    transition: Mapping[tuple[str, str], str]
    accepting: frozenset[str]

    def __post_init__(self):
        missing = [(q, a) for q in self.states for a in self.alphabet
                   if (q, a) not in self.transition]
        if missing:
            q, a = missing[0]
            raise PolicyError(f"automaton not total: no transition from {q} on {a}")
        if self.initial not in self.states:
            raise PolicyError(f"unknown initial state {self.initial}")

    def run(self, word: Sequence[str]) -> str:
        q = self.initial
        for a in word:
            q = self.transition[(q, a)]
        return q

    def accepts(self, word: Sequence[str]) -> bool:
        return self.run(word) in self.accepting


IDENTITY_NAME = "eps"


def transition_monoid(a: PolicyAutomaton) -> tuple[Monoid, dict[str, int], frozenset[int]]:
    """Monoid of state transformations generated by the letters of ``a``.

    Elements are named by their shortest (then alphabetically first)
    generating word, letters joined by ``.``; the identity is ``eps``.
    Returns ``(monoid, hom, allowed)``.
    """
    states = a.states
    pos = {q: i for i, q in enumerate(states)}
    gens = {x: tuple(pos[a.transition[(q, x)]] for q in states) for x in a.alphabet}
    ident = tuple(range(len(states)))
    elems = [ident]
    names = [IDENTITY_NAME]
    index = {ident: 0}
    queue = deque([(ident, ())])
    while queue:
        f, word = queue.popleft()
        for x in a.alphabet:
            g = tuple(gens[x][q] for q in f)  # f first, then x
            if g not in index:
                index[g] = len(elems)
                elems.append(g)
                names.append(".".join(word + (x,)))
                queue.append((g, word + (x,)))
    n = len(elems)
    table = np.empty((n, n), dtype=np.int64)
    for i, f in enumerate(elems):
        for j, g in enumerate(elems):
            table[i, j] = index[tuple(g[q] for q in f)]
    hom = {x: index[gens[x]] for x in a.alphabet}
    q0 = pos[a.initial]
    acc = {pos[q] for q in a.accepting}
    allowed = frozenset(i for i, f in enumerate(elems) if f[q0] in acc)
    return Monoid(tuple(names), table, 0), hom, allowed


# --------------------------------------------------------------------------
# Builtins
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Letter:
    name: str


@dataclass(frozen=True)
class ArgWord:
    """The tag word of argument ``index`` (1-based), copied verbatim."""
    index: int


@dataclass(frozen=True)
class ArgClassLetter:
    """A single event letter whose image is the class of argument ``index``."""
    index: int


WordItem = Union[Letter, ArgWord, ArgClassLetter]


@dataclass(frozen=True)
class TextLit:
    text: str


@dataclass(frozen=True)
class TextArg:
    index: int


@dataclass(frozen=True)
class TextFresh:
    pass


@dataclass(frozen=True)
class TextFn:
    fn: str
    index: int


TextExpr = Union[TextLit, TextArg, TextFresh, TextFn]

TEXT_FUNCTIONS = {
    "escape_html": lambda s: html.escape(s, quote=False),
    "escape_js": lambda s: s.replace("\\", "\\\\").replace("'", "\\'").replace('"', '\\"'),
    "upper": str.upper,
}


@dataclass(frozen=True)
class Outcome:
    text: TextExpr
    word: tuple[WordItem, ...]
    trace: tuple[WordItem, ...]


@dataclass(frozen=True)
class BuiltinSpec:
    name: str
    arity: int
    outcomes: tuple[Outcome, ...]
    typing: Mapping[tuple[int, ...], tuple[frozenset, frozenset]] = field(default_factory=dict)


@dataclass(frozen=True)
class Lit2WordRule:
    kind: str  # "exact" | "prefix" | "default"
    pattern: str
    word: Word

    def matches(self, text: str) -> bool:
        if self.kind == "exact":
            return text == self.pattern
        if self.kind == "prefix":
            return text.startswith(self.pattern)
        return True


class Chooser(Protocol):
    def choose(self, n: int) -> int: ...


class FirstChooser:
    def choose(self, n: int) -> int:
        return 0


class IndexChooser:
    """Replays a fixed sequence of choices (0 once exhausted), recording option counts."""

    def __init__(self, choices: Sequence[int] = ()):
        self.choices = list(choices)
        self.taken: list[int] = []
        self.options: list[int] = []

    def choose(self, n: int) -> int:
        k = len(self.taken)
        c = self.choices[k] if k < len(self.choices) else 0
        if not 0 <= c < n:
            raise ValueError(f"choice {c} out of range for {n} options")
        self.taken.append(c)
        self.options.append(n)
        return c


class RandomChooser:
    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def choose(self, n: int) -> int:
        return self.rng.randrange(n)


@dataclass(frozen=True, eq=False)
class Policy:
    alphabet: tuple[str, ...]
    monoid: Monoid
    hom: Mapping[str, int]
    allowed: frozenset[int]
    lit2word_rules: tuple[Lit2WordRule, ...]
    builtins: Mapping[str, BuiltinSpec]
    automaton: Optional[PolicyAutomaton] = None
    literal_pool: tuple[str, ...] = ("input",)
    name: str = "policy"

    def __post_init__(self):
        for x in self.alphabet:
            if x not in self.hom:
                raise PolicyError(f"homomorphism undefined on letter {x}")
        if self.monoid.neutral not in self.allowed:
            raise PolicyError("the neutral element must be allowed")
        if not any(r.kind == "default" for r in self.lit2word_rules):
            raise PolicyError("lit2word needs a default rule")
        problems = self.monoid.law_violations()
        if problems:
            raise PolicyError(problems[0])
        needs_letters = any(isinstance(item, ArgClassLetter)
                            for b in self.builtins.values() for o in b.outcomes
                            for item in o.word + o.trace)
        if needs_letters:
            missing = [self.monoid.names[u] for u in self.monoid.elements
                       if u not in self.event_letters]
            if missing:
                raise PolicyError(f"no letter with hom = {missing[0]}")
        for b in self.builtins.values():
            _check_declared_typing(b, self)

    @property
    def neutral(self) -> int:
        return self.monoid.neutral

    def word_class(self, word: Iterable[str]) -> int:
        return self.monoid.prod(self.hom[x] for x in word)

    def lit2word(self, text: str) -> Word:
        for rule in self.lit2word_rules:
            if rule.matches(text):
                return rule.word
        raise PolicyError("lit2word is not total")

    @cached_property
    def event_letters(self) -> dict[int, str]:
        out: dict[int, str] = {}
        for x in self.alphabet:
            out.setdefault(self.hom[x], x)
        return out

    def element(self, name: str) -> int:
        return self.monoid.index(name)

    def element_name(self, u: int) -> str:
        return self.monoid.names[u]

    def builtin(self, fn: str) -> BuiltinSpec:
        try:
            return self.builtins[fn]
        except KeyError:
            raise PolicyError(f"unknown builtin {fn}") from None


def _item_class(item: WordItem, args: Sequence[int], pol: Policy) -> int:
    if isinstance(item, Letter):
        return pol.hom[item.name]
    return args[item.index - 1]


def derived_typing(b: BuiltinSpec, args: Sequence[int], pol: Policy) -> tuple[frozenset, frozenset]:
    """Exact monoid image of every outcome of ``b`` on arguments of classes ``args``."""
    m = pol.monoid
    tags = frozenset(m.prod(_item_class(i, args, pol) for i in o.word) for o in b.outcomes)
    effs = frozenset(m.prod(_item_class(i, args, pol) for i in o.trace) for o in b.outcomes)
    return tags, effs


def _check_declared_typing(b: BuiltinSpec, pol: Policy) -> None:
    for args, (tags, effs) in b.typing.items():
        if len(args) != b.arity:
            raise PolicyError(f"typing of {b.name} has wrong arity")
        dtags, deffs = derived_typing(b, args, pol)
        if not (dtags <= tags and deffs <= effs):
            raise PolicyError(f"declared typing of {b.name} is unsound on "
                              f"({', '.join(pol.element_name(u) for u in args)})")


def builtin_typing(fn: str, args: Sequence[int], pol: Policy) -> tuple[frozenset, frozenset]:
    """``M(fn)(u1..un)``: possible result tags and trace classes."""
    b = pol.builtin(fn)
    args = tuple(args)
    if len(args) != b.arity:
        raise PolicyError(f"{fn} expects {b.arity} arguments, got {len(args)}")
    if args in b.typing:
        return b.typing[args]
    return derived_typing(b, args, pol)


def typing_table(fn: str, pol: Policy) -> dict[tuple[int, ...], tuple[frozenset, frozenset]]:
    b = pol.builtin(fn)
    return {args: builtin_typing(fn, args, pol)
            for args in product(pol.monoid.elements, repeat=b.arity)}


def _word(items: Sequence[WordItem], args: Sequence[tuple[str, Word]], pol: Policy) -> Word:
    out: list[str] = []
    for item in items:
        if isinstance(item, Letter):
            out.append(item.name)
        elif isinstance(item, ArgWord):
            out.extend(args[item.index - 1][1])
        else:
            u = pol.word_class(args[item.index - 1][1])
            out.append(pol.event_letters[u])
    return tuple(out)


def builtin_step(fn: str, args: Sequence[tuple[str, Word]], pol: Policy,
                 chooser: Chooser) -> tuple[str, Word, Word]:
    """Pick one element of ``sem(fn)(args)``: ``(result text, tag word, trace)``."""
    b = pol.builtin(fn)
    if len(args) != b.arity:
        raise PolicyError(f"{fn} expects {b.arity} arguments, got {len(args)}")
    if not b.outcomes:
        raise PolicyError(f"{fn} has no outcomes")
    o = b.outcomes[chooser.choose(len(b.outcomes)) if len(b.outcomes) > 1 else 0]
    t = o.text
    if isinstance(t, TextLit):
        text = t.text
    elif isinstance(t, TextArg):
        text = args[t.index - 1][0]
    elif isinstance(t, TextFn):
        text = TEXT_FUNCTIONS[t.fn](args[t.index - 1][0])
    else:
        pool = pol.literal_pool
        text = pool[chooser.choose(len(pool))] if len(pool) > 1 else pool[0]
    return text, _word(o.word, args, pol), _word(o.trace, args, pol)
