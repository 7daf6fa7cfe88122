"""Algorithmic type-and-effect inference and the interprocedural fixpoint.

The class table holds a field typing ``F[(f, C, r)]`` and method
summaries ``Ma[(m, z, C, r, args)]`` where ``args`` is a tuple of atomic
argument types.  Summaries are created on demand from call sites and
from the analysed root expressions, then the fixpoint re-types every
summary body until neither table changes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Optional, Sequence

from .contexts import EMPTY_CONTEXT, Context, ContextPolicy, context_name
from .lattice import (EMPTY, NULL_TYPE, LatticeElem, MethodSig, RefinedType, arg_atoms,
                      join_elem, join_type, leq_elem, render_type, string_type, subtype)
from .policy import Policy, PolicyError, builtin_typing, effect_concat
from .syntax import (NULLTYPE, OBJECT, STRING, THIS, Builtin, Cast, Concat, Expr, GetField, IfEq,
                     Invoke, Let, New, Null, Program, SetField, StrLit, Var, entry_expr,
                     label_expr, param_name, walk)

FKey = tuple  # (field, class, region)
MaKey = tuple  # (method, context, class, region, arg atoms)


class AnalysisError(Exception):
    """Type error or unsupported construct found while typing a position."""

    def __init__(self, msg: str, label: Optional[int] = None, pos=None):
        self.msg, self.label, self.pos = msg, label, pos
        where = f" at {pos[0]}:{pos[1]}" if pos else (f" at position {label}" if label is not None else "")
        super().__init__(msg + where)


class MissingEntry(AnalysisError):
    pass


@dataclass
class Options:
    neutral_init: bool = False  # start summaries at effect {neutral} instead of the empty set
    exhaustive: bool = False  # materialize every summary up front instead of on demand
    max_rounds: int = 100_000


@dataclass
class ClassTable:
    p: Program
    pol: Policy
    ctxpol: ContextPolicy
    options: Options = field(default_factory=Options)
    F: dict = field(default_factory=dict)
    Ma: dict = field(default_factory=dict)
    extra_sites: dict = field(default_factory=dict)  # synthetic allocation label -> class
    extra_calls: set = field(default_factory=set)
    _region_classes: dict = field(default_factory=dict, repr=False)

    # -- relevance ------------------------------------------------------
    @property
    def sites(self) -> dict[int, str]:
        return {**self.p.alloc_sites, **self.extra_sites}

    def region_classes(self, r) -> frozenset[str]:
        """Classes C with C_r relevant: ancestors of the classes allocated into ``r``."""
        out = self._region_classes.get(r)
        if out is None:
            sites = self.ctxpol.sites_of(r)
            allsites = self.sites
            chosen = allsites.values() if sites is None else [allsites[i] for i in sites if i in allsites]
            acc: set[str] = set()
            for c in chosen:
                acc.update(self.p.ancestors(c))
            out = self._region_classes[r] = frozenset(acc)
        return out

    def relevant(self, cls: str, r) -> bool:
        return cls in self.region_classes(r)

    def region_universe(self) -> list:
        return self.ctxpol.regions(self.p, self.extra_sites, self.extra_calls)

    def relevant_atoms(self) -> set[tuple[str, object]]:
        return {(c, r) for r in self.region_universe() for c in self.region_classes(r)}

    # -- bottoms and lookups --------------------------------------------
    def field_bottom(self, f: str, c: str) -> RefinedType:
        std = self.p.std
        cls = std.F0.get((c, f), OBJECT) if std else OBJECT
        return RefinedType(cls)

    def method_bottom(self, m: str, c: str) -> LatticeElem:
        std = self.p.std
        cls = std.M0[(c, m)][1] if std and (c, m) in std.M0 else OBJECT
        eff = frozenset([self.pol.neutral]) if self.options.neutral_init else EMPTY
        return LatticeElem(RefinedType(cls), eff)

    def get_field(self, f: str, c: str, r) -> RefinedType:
        t = self.F.get((f, c, r))
        return self.field_bottom(f, c) if t is None else t

    def params(self, c: str, m: str) -> tuple[str, ...]:
        std = self.p.std
        if std and (c, m) in std.M0:
            return std.M0[(c, m)][0]
        return (OBJECT,) * self.p.arity[m]

    def arg_keys(self, t: RefinedType, declared: str) -> list[RefinedType]:
        """Atoms of an actual argument, re-classed to the declared parameter class."""
        k = declared if self.p.subclass_of(t.cls, declared) else t.cls
        return arg_atoms(RefinedType(k, t.regions, t.tags))

    def snapshot(self):
        return dict(self.F), dict(self.Ma)

    def size(self) -> int:
        return len(self.F) + len(self.Ma)

    def height(self) -> int:
        """Bound on strictly increasing chains of one table entry."""
        depth = max((self.p.depth(c) for c in self.p.all_classes if c != "NullType"), default=0) + 1
        nreg = max(len(self.region_universe()), len(getattr(self.ctxpol, "_keys", ())))
        return depth + nreg + 2 * self.pol.monoid.size + 1

    # -- rendering ------------------------------------------------------
    def region_name(self, r) -> str:
        return self.ctxpol.region_name(r)

    def render(self, t: RefinedType) -> str:
        return render_type(t, self.region_name, self.pol.element_name)

    def render_effect(self, u: Iterable[int]) -> str:
        return "{" + ",".join(sorted(self.pol.element_name(x) for x in u)) + "}"


def lift(p: Program, pol: Policy, ctxpol: ContextPolicy,
         options: Optional[Options] = None) -> ClassTable:
    """Initial table: empty (bottom) field and method typings over the program's regions."""
    return ClassTable(p, pol, ctxpol, options or Options())


# --------------------------------------------------------------------------
# typeff / typeff'
# --------------------------------------------------------------------------


class Typer:
    """One syntax-directed pass; ``mutable`` selects typeff' (weak field updates
    and on-demand summaries) over the checking variant."""

    def __init__(self, tab: ClassTable, mutable: bool = True):
        self.tab = tab
        self.mutable = mutable
        self.new_keys: list[MaKey] = []
        # everything below is attributed to the summary being typed (None: a root)
        self.owner: Optional[MaKey] = None
        self.deps: dict = {}
        self.builtin_effects: dict = {}
        self.warnings: dict = {}
        self.visits = 0
        m = tab.pol.monoid
        self.unit = frozenset([m.neutral])

    def error(self, msg: str, e: Expr):
        raise AnalysisError(msg, e.label, self.tab.p.positions.get(e.label))

    def warn(self, msg: str, e: Expr):
        self.warnings.setdefault(self.owner, {}).setdefault(e.label, msg)

    def lookup(self, key: MaKey, e: Expr) -> LatticeElem:
        self.deps.setdefault(self.owner, set()).add(key)
        elem = self.tab.Ma.get(key)
        if elem is None:
            if not self.mutable:
                raise MissingEntry(f"no summary for {key[2]}.{key[0]}", e.label)
            elem = self.tab.Ma[key] = self.tab.method_bottom(key[0], key[2])
            self.new_keys.append(key)
        return elem

    def typeff(self, e: Expr, gamma: dict, z: Context) -> LatticeElem:
        tab = self.tab
        p, pol = tab.p, tab.pol
        if isinstance(e, Let):
            gamma = dict(gamma)
            acc = self.unit
            while isinstance(e, Let):
                self.visits += 1
                bound = self.typeff(e.bound, gamma, z)
                acc = effect_concat(acc, bound.effect, pol.monoid)
                gamma[e.var] = bound.type
                e = e.body
            last = self.typeff(e, gamma, z)
            return LatticeElem(last.type, effect_concat(acc, last.effect, pol.monoid))
        self.visits += 1
        unit = self.unit
        if isinstance(e, Var):
            return LatticeElem(self.var(gamma, e.name, e), unit)
        if isinstance(e, Null):
            return LatticeElem(NULL_TYPE, unit)
        if isinstance(e, New):
            return LatticeElem(RefinedType(e.cls, frozenset([tab.ctxpol.psi(z, e.label)])), unit)
        if isinstance(e, StrLit):
            return LatticeElem(string_type([pol.word_class(pol.lit2word(e.text))]), unit)
        if isinstance(e, Concat):
            a = self.string_operand(gamma, e.left, e).tags
            b = self.string_operand(gamma, e.right, e).tags
            if not a or not b:
                self.warn("concatenation with a provably null operand", e)
                return LatticeElem(string_type(()), EMPTY)
            return LatticeElem(string_type(effect_concat(a, b, pol.monoid)), unit)
        if isinstance(e, IfEq):
            tx, ty = self.var(gamma, e.left, e), self.var(gamma, e.right, e)
            regs, tags = tx.regions & ty.regions, tx.tags & ty.tags
            g_then = {**gamma, e.left: tx.with_sets(regs, tags & tx.tags),
                      e.right: ty.with_sets(regs, tags & ty.tags)}
            if e.left == e.right:
                g_then[e.left] = tx
            l1 = self.typeff(e.then, g_then, z)
            l2 = self.typeff(e.orelse, gamma, z)
            return join_elem(l1, l2, p)
        if isinstance(e, Cast):
            inner = self.typeff(e.expr, gamma, z)
            return LatticeElem(self.cast(inner.type, e), inner.effect)
        if isinstance(e, GetField):
            recv = self.var(gamma, e.obj, e)
            if not recv.regions:
                self.warn(f"field read {e.obj}.{e.fld} on a provably null receiver", e)
                return LatticeElem(NULL_TYPE, EMPTY)
            self.check_field(recv.cls, e.fld, e)
            out = None
            for r in recv.regions:
                t = tab.get_field(e.fld, recv.cls, r)
                out = t if out is None else join_type(out, t, p)
            return LatticeElem(out, unit)
        if isinstance(e, SetField):
            recv = self.var(gamma, e.obj, e)
            val = self.var(gamma, e.value, e)
            if not recv.regions:
                self.warn(f"field write {e.obj}.{e.fld} on a provably null receiver", e)
                return LatticeElem(val, EMPTY)
            self.check_field(recv.cls, e.fld, e)
            for r in recv.regions:
                key = (e.fld, recv.cls, r)
                cur = tab.get_field(e.fld, recv.cls, r)
                if not subtype(val, cur, p):
                    if not self.mutable:
                        self.error(f"field {recv.cls}.{e.fld} cannot hold {tab.render(val)}", e)
                    tab.F[key] = join_type(cur, val, p)
            return LatticeElem(val, unit)
        if isinstance(e, Invoke):
            return self.invoke(e, gamma, z)
        if isinstance(e, Builtin):
            return self.builtin(e, gamma)
        raise TypeError(f"not an expression: {e!r}")

    def var(self, gamma: dict, x: str, e: Expr) -> RefinedType:
        try:
            return gamma[x]
        except KeyError:
            self.error(f"unbound variable {x}", e)

    def string_operand(self, gamma: dict, x: str, e: Expr) -> RefinedType:
        t = self.var(gamma, x, e)
        if t.cls not in (STRING, NULLTYPE):
            self.error(f"{x} has type {self.tab.render(t)} where a String is required "
                       f"(cast it to String first)", e)
        return t

    def check_field(self, cls: str, f: str, e: Expr):
        if f not in self.tab.p.fields.get(cls, ()):
            self.error(f"class {cls} has no field {f}", e)

    def cast(self, t: RefinedType, e: Cast) -> RefinedType:
        tab = self.tab
        p = tab.p
        d = e.cls
        if p.subclass_of(t.cls, d):
            if d == OBJECT:
                return RefinedType(d, t.regions, t.tags)
            return RefinedType(d, t.regions if d != STRING else EMPTY,
                               t.tags if d == STRING else EMPTY)
        if p.subclass_of(d, t.cls):
            if d == STRING:
                return RefinedType(d, EMPTY, t.tags)
            return RefinedType(d, frozenset(r for r in t.regions if tab.relevant(d, r)))
        # no object of t.cls can belong to d, so the cast always fails
        self.warn(f"cast from {t.cls} to unrelated class {d} always fails", e)
        return RefinedType(d)

    def invoke(self, e: Invoke, gamma: dict, z: Context) -> LatticeElem:
        tab = self.tab
        p = tab.p
        recv = self.var(gamma, e.obj, e)
        c = recv.cls
        if not recv.regions:
            self.warn(f"call {e.obj}.{e.method}() on a provably null receiver", e)
            return LatticeElem(NULL_TYPE, EMPTY)
        if (c, e.method) not in p.mtable:
            self.error(f"class {c} has no method {e.method}", e)
        declared = tab.params(c, e.method)
        if len(declared) != len(e.args):
            self.error(f"{e.method} expects {len(declared)} arguments", e)
        choices = [tab.arg_keys(self.var(gamma, y, e), d) for y, d in zip(e.args, declared)]
        out = None
        for r in sorted(recv.regions):
            z2 = tab.ctxpol.phi(z, c, r, e.method, e.label)
            for combo in product(*choices):
                elem = self.lookup((e.method, z2, c, r, combo), e)
                out = elem if out is None else join_elem(out, elem, p)
        return out

    def builtin(self, e: Builtin, gamma: dict) -> LatticeElem:
        pol = self.tab.pol
        tagsets = [sorted(self.string_operand(gamma, y, e).tags) for y in e.args]
        if any(not ts for ts in tagsets):
            self.warn(f"{e.fn}() with a provably null argument", e)
            return LatticeElem(string_type(()), EMPTY)
        tags: set[int] = set()
        effs: set[int] = set()
        try:
            for combo in product(*tagsets):
                t, u = builtin_typing(e.fn, combo, pol)
                tags |= t
                effs |= u
        except PolicyError as err:
            self.error(str(err), e)
        self.builtin_effects.setdefault(self.owner, {}).setdefault(e.label, set()).update(effs)
        return LatticeElem(string_type(tags), frozenset(effs))


def typeff(e: Expr, gamma: dict, z: Context, tab: ClassTable) -> LatticeElem:
    """Type ``e`` against a fixed table (field writes must already be covered)."""
    return Typer(tab, mutable=False).typeff(e, gamma, z)


def typeff_prime(e: Expr, gamma: dict, z: Context, tab: ClassTable) -> LatticeElem:
    """Type ``e``, weakening field entries and creating missing summaries as needed."""
    return Typer(tab, mutable=True).typeff(e, gamma, z)


def method_gamma(tab: ClassTable, key: MaKey) -> dict:
    m, _, c, r, args = key
    g = {THIS: RefinedType(c, frozenset([r]))}
    for i, t in enumerate(args, 1):
        g[param_name(i)] = t
    return g


# --------------------------------------------------------------------------
# Table normalization
# --------------------------------------------------------------------------


def check_class_table(tab: ClassTable) -> ClassTable:
    """Make field typings subclass-invariant and summaries override-monotone (in place)."""
    p = tab.p
    groups: dict[tuple, list] = {}
    for (f, c, r) in list(tab.F):
        groups.setdefault((f, p.field_owner(c, f), r), []).append(c)
    for (f, owner, r), members in groups.items():
        joined = None
        for c in members:
            t = tab.F[(f, c, r)]
            joined = t if joined is None else join_type(joined, t, p)
        targets = set(members)
        targets.update(d for d in p.subclasses(owner)
                       if f in p.fields.get(d, ()) and tab.relevant(d, r))
        for d in targets:
            if tab.F.get((f, d, r)) != joined:
                tab.F[(f, d, r)] = joined

    for key in list(tab.Ma):
        m, z, c, r, args = key
        for d in p.subclasses(c):
            if d != c and tab.relevant(d, r):
                dkey = (m, z, d, r, args)
                if dkey not in tab.Ma:
                    tab.Ma[dkey] = tab.method_bottom(m, d)
    before = dict(tab.Ma)
    for key, elem in before.items():
        m, z, c, r, args = key
        acc = elem
        for d in p.subclasses(c):
            if d != c:
                other = before.get((m, z, d, r, args))
                if other is not None:
                    acc = join_elem(acc, other, p)
        if acc != elem:
            tab.Ma[key] = acc
    return tab


def materialize_all(tab: ClassTable) -> None:
    """Create a summary for every context, relevant receiver and argument atom."""
    p = tab.p
    regions = tab.region_universe()
    contexts = tab.ctxpol.contexts(p, tab.extra_calls)
    pol = tab.pol

    def param_atoms(cls: str) -> list[RefinedType]:
        out = [RefinedType(cls)]
        if cls != STRING:
            out += [RefinedType(cls, frozenset([r])) for r in regions if tab.relevant(cls, r)]
        if cls in (STRING, OBJECT):
            out += [RefinedType(cls, EMPTY, frozenset([u])) for u in pol.monoid.elements]
        return out

    for (c, m) in sorted(p.mtable):
        params = tab.params(c, m)
        arg_lists = [param_atoms(t) for t in params]
        for r in regions:
            if not tab.relevant(c, r):
                continue
            for z in contexts:
                for combo in product(*arg_lists):
                    key = (m, z, c, r, combo)
                    if key not in tab.Ma:
                        tab.Ma[key] = tab.method_bottom(m, c)


# --------------------------------------------------------------------------
# The fixpoint
# --------------------------------------------------------------------------


@dataclass
class Analysis:
    table: ClassTable
    roots: list[Expr]
    results: list[LatticeElem]
    rounds: int
    elapsed: float
    warnings: dict[int, str]
    builtin_effects: dict[int, frozenset]
    entries: list[tuple[str, str]] = field(default_factory=list)
    live: set = field(default_factory=set)  # summaries reachable from the roots

    @property
    def effect(self) -> frozenset:
        out: frozenset = EMPTY
        for r in self.results:
            out |= r.effect
        return out


def prepare_roots(p: Program, entries: Sequence[tuple[str, str]] = (),
                  exprs: Sequence[Expr] = ()) -> list[Expr]:
    """Label root expressions after the program's own labels, one after another."""
    roots = []
    nxt = p.max_label + 1
    for c, m in entries:
        e, nxt = label_expr(entry_expr(p, c, m), nxt)
        roots.append(e)
    for e in exprs:
        e, nxt = label_expr(e, nxt)
        roots.append(e)
    return roots


def analyze(p: Program, pol: Policy, ctxpol: ContextPolicy,
            entries: Sequence[tuple[str, str]] = (), exprs: Sequence[Expr] = (),
            options: Optional[Options] = None, seeds: Iterable[MaKey] = ()) -> Analysis:
    """Least fixpoint of the per-summary re-typing operator for the given roots."""
    start = time.perf_counter()
    tab = lift(p, pol, ctxpol, options)
    roots = prepare_roots(p, entries, exprs)
    for root in roots:
        for node in walk(root):
            if isinstance(node, New):
                tab.extra_sites[node.label] = node.cls
            elif isinstance(node, Invoke):
                tab.extra_calls.add(node.label)
    for key in seeds:
        if key not in tab.Ma:
            tab.Ma[key] = tab.method_bottom(key[0], key[2])
    if tab.options.exhaustive:
        materialize_all(tab)

    rounds = 0
    results: list[LatticeElem] = []
    while True:
        rounds += 1
        if rounds > tab.options.max_rounds:
            raise AnalysisError(f"no fixpoint after {tab.options.max_rounds} rounds")
        before = tab.snapshot()
        typer = Typer(tab, mutable=True)
        results = [typer.typeff(root, {}, EMPTY_CONTEXT) for root in roots]
        order = list(tab.Ma)
        seen = set(order)
        i = 0
        while i < len(order):
            key = order[i]
            i += 1
            m, z, c, r, args = key
            body = p.mtable.get((c, m))
            if body is None:
                raise AnalysisError(f"class {c} has no method {m}")
            typer.owner = key
            elem = typer.typeff(body, method_gamma(tab, key), z)
            typer.owner = None
            cur = tab.Ma[key]
            joined = join_elem(cur, elem, p)
            if joined != cur:
                tab.Ma[key] = joined
            for k in typer.new_keys:
                if k not in seen:
                    seen.add(k)
                    order.append(k)
            typer.new_keys.clear()
        check_class_table(tab)
        if (tab.F, tab.Ma) == before:
            break
    live = reachable(tab, typer.deps)
    effects: dict[int, set] = {}
    warnings: dict[int, str] = {}
    for owner in live:
        for lab, u in typer.builtin_effects.get(owner, {}).items():
            effects.setdefault(lab, set()).update(u)
        for lab, msg in typer.warnings.get(owner, {}).items():
            warnings.setdefault(lab, msg)
    return Analysis(tab, roots, results, rounds, time.perf_counter() - start,
                    warnings, {lab: frozenset(u) for lab, u in effects.items()},
                    list(entries), live - {None})


def reachable(tab: ClassTable, deps: dict) -> set:
    """Summaries the roots depend on, through calls and overriding subclasses."""
    p = tab.p
    seen: set = {None}
    stack: list = [None]
    while stack:
        k = stack.pop()
        succ = set(deps.get(k, ()))
        if k is not None:
            m, z, c, r, args = k
            succ.update(key for d in p.subclasses(c) if d != c
                        for key in [(m, z, d, r, args)] if key in tab.Ma)
        for n in succ:
            if n not in seen:
                seen.add(n)
                stack.append(n)
    return seen


def is_fixpoint(an: Analysis) -> bool:
    """One more round of re-typing changes neither table."""
    tab = an.table
    before = tab.snapshot()
    typer = Typer(tab, mutable=True)
    try:
        for root in an.roots:
            typer.typeff(root, {}, EMPTY_CONTEXT)
        for key in list(tab.Ma):
            elem = typer.typeff(tab.p.mtable[(key[2], key[0])], method_gamma(tab, key), key[1])
            tab.Ma[key] = join_elem(tab.Ma[key], elem, tab.p)
        check_class_table(tab)
        return (tab.F, tab.Ma) == before
    finally:
        tab.F, tab.Ma = before


def recheck(an: Analysis) -> list[LatticeElem]:
    """Re-type the roots against the frozen final table (checking variant)."""
    return [typeff(root, {}, EMPTY_CONTEXT, an.table) for root in an.roots]


# --------------------------------------------------------------------------
# Verdicts and reports
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    compliant: bool
    effect: frozenset
    witnesses: frozenset
    sites: tuple = ()  # (label, (line, col) | None, builtin name, offending elements)

    @property
    def label(self) -> str:
        return "OK" if self.compliant else "BAD"


def verdict(an: Analysis, index: Optional[int] = None) -> Verdict:
    """Compliant iff every inferred trace class of the root(s) is allowed."""
    tab = an.table
    pol = tab.pol
    u = an.results[index].effect if index is not None else an.effect
    bad = frozenset(x for x in u if x not in pol.allowed)
    sites = []
    if bad:
        p = tab.p
        labels = {**p.labels, **{n.label: n for r in an.roots for n in walk(r)}}
        for lab, effs in sorted(an.builtin_effects.items()):
            own = sorted(x for x in effs if x not in pol.allowed)
            if own:
                sites.append((lab, p.positions.get(lab), labels[lab].fn, tuple(own)))
        if not sites:
            for lab, effs in sorted(an.builtin_effects.items()):
                if any(x != pol.neutral for x in effs):
                    sites.append((lab, p.positions.get(lab), labels[lab].fn,
                                  tuple(sorted(x for x in effs if x != pol.neutral))))
    return Verdict(not bad, u, bad, tuple(sites))


def method_summaries(tab: ClassTable) -> list[dict]:
    """Per-method join over all summaries, for reports."""
    acc: dict[tuple[str, str], tuple[LatticeElem, int]] = {}
    for (m, z, c, r, args), elem in tab.Ma.items():
        prev = acc.get((c, m))
        acc[(c, m)] = (elem if prev is None else join_elem(prev[0], elem, tab.p),
                       1 if prev is None else prev[1] + 1)
    return [{"method": f"{c}.{m}", "entries": n, "result": tab.render(elem.type),
             "effect": sorted(tab.pol.element_name(x) for x in elem.effect)}
            for (c, m), (elem, n) in sorted(acc.items())]


def report(an: Analysis, v: Optional[Verdict] = None, **extra) -> dict:
    tab = an.table
    v = v or verdict(an)
    pol = tab.pol
    name = pol.element_name
    out = {
        "schema": "fjeucs-report/1",
        **extra,
        "policy": pol.name,
        "context_policy": tab.ctxpol.name,
        "k": getattr(tab.ctxpol, "k", None),
        "entry": [f"{c}.{m}" for c, m in an.entries],
        "verdict": "OK" if v.compliant else "VIOLATION",
        "effect": sorted(name(x) for x in v.effect),
        "witnesses": sorted(name(x) for x in v.witnesses),
        "sites": [{"label": lab, "line": pos[0] if pos else None, "col": pos[1] if pos else None,
                   "builtin": fn, "elements": [name(x) for x in els]}
                  for lab, pos, fn, els in v.sites],
        "methods": method_summaries(tab),
        "iterations": an.rounds,
        "table_entries": tab.size(),
        "time_seconds": round(an.elapsed, 6),
        "warnings": [{"label": lab, "line": (tab.p.positions.get(lab) or (None,))[0], "message": msg}
                     for lab, msg in sorted(an.warnings.items())],
    }
    return out


def format_report(an: Analysis, v: Optional[Verdict] = None) -> str:
    tab = an.table
    v = v or verdict(an)
    pol = tab.pol
    lines = [f"verdict: {'OK (compliant)' if v.compliant else 'VIOLATION'}",
             f"effect: {tab.render_effect(v.effect)}"]
    if not v.compliant:
        lines.append(f"disallowed: {tab.render_effect(v.witnesses)}")
        for lab, pos, fn, els in v.sites:
            where = f"line {pos[0]}, col {pos[1]}" if pos else f"position {lab}"
            lines.append(f"  {fn}() at {where} may emit {tab.render_effect(els)}")
    for s in method_summaries(tab):
        lines.append(f"  {s['method']}: {s['result']} ! {{{','.join(s['effect'])}}} "
                     f"({s['entries']} summaries)")
    for lab, msg in sorted(an.warnings.items()):
        pos = tab.p.positions.get(lab)
        lines.append(f"warning: {msg}" + (f" (line {pos[0]})" if pos else ""))
    lines.append(f"iterations: {an.rounds}, table entries: {tab.size()}, time: {an.elapsed:.3f}s")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Set-wise views and semi-declarative table validation
# --------------------------------------------------------------------------


@dataclass
class DeclTable:
    """Set-valued class table: ``M[(m, z, C, r)]`` is a list of signatures."""

    F: dict = field(default_factory=dict)
    M: dict = field(default_factory=dict)
    relevant: Optional[set] = None  # {(C, r)}; string tags are always relevant


def as_decl_table(tab: ClassTable) -> DeclTable:
    M: dict = {}
    for (m, z, c, r, args), elem in tab.Ma.items():
        M.setdefault((m, z, c, r), []).append(MethodSig(args, elem.type, elem.effect))
    regions = set(tab.region_universe())
    for t in list(tab.F.values()) + [s.result for v in M.values() for s in v]:
        regions |= t.regions
    for k in list(tab.F) + list(M):
        regions.add(k[-1] if len(k) == 3 else k[3])
    relevant = {(c, r) for r in regions for c in tab.region_classes(r)}
    return DeclTable(dict(tab.F), M, relevant)


def dump_table(tab: ClassTable) -> str:
    """Stable text form of the final tables (see ``checker.load_table``)."""
    d = as_decl_table(tab)
    rn, rt = tab.region_name, tab.render
    lines = ["# fjeucs class table", f"# policy {tab.pol.name}; contexts {tab.ctxpol!r}"]
    for c, r in sorted(d.relevant, key=lambda x: (rn(x[1]), x[0])):
        lines.append(f"relevant {c} {rn(r)}")
    for (f, c, r), t in sorted(d.F.items(), key=lambda kv: (kv[0][0], kv[0][1], rn(kv[0][2]))):
        lines.append(f"field {f} {c} {rn(r)} = {rt(t)}")
    rows = []
    for (m, z, c, r), sigs in d.M.items():
        for s in sigs:
            args = " ".join(rt(a) for a in s.args)
            rows.append(f"method {m} {context_name(z)} {c} {rn(r)} ( {args} ) = "
                        f"{rt(s.result)} ! {tab.render_effect(s.effect)}")
    lines.extend(sorted(rows))
    return "\n".join(lines) + "\n"


def validate_semi_table(tab_s: DeclTable, p: Program, pol: Policy, ctxpol: ContextPolicy,
                        entries: Sequence[tuple[str, str]] = (),
                        options: Optional[Options] = None) -> list[str]:
    """Diagnostics for a user table that is not (a weakening of) the inferred one."""
    from .checker import check_override_condition, check_relevance_closure
    from .lattice import atoms_seq

    probe = lift(p, pol, ctxpol, options)
    for root in prepare_roots(p, entries):
        for node in walk(root):
            if isinstance(node, New):
                probe.extra_sites[node.label] = node.cls
    wanted: list[tuple[MaKey, MethodSig]] = []
    diags: list[str] = []
    for (m, z, c, r), sigs in sorted(tab_s.M.items(), key=repr):
        if (c, m) not in p.mtable:
            diags.append(f"method entry {c}.{m} for a method the class does not have")
            continue
        declared = probe.params(c, m)
        for s in sigs:
            if len(s.args) != len(declared):
                diags.append(f"{c}.{m}: signature has {len(s.args)} arguments")
                continue
            per_arg = [[a for a in arg_atoms(t)] for t in s.args]
            for combo in product(*per_arg):
                key_args = tuple(probe.arg_keys(a, d)[0] for a, d in zip(combo, declared))
                wanted.append(((m, z, c, r, key_args), s))
    an = analyze(p, pol, ctxpol, entries, options=options, seeds=[k for k, _ in wanted])
    tab = an.table
    for key, s in wanted:
        got = tab.Ma[key]
        if not leq_elem(got, LatticeElem(s.result, s.effect), p):
            m, z, c, r, args = key
            diags.append(f"entry {c}.{m} in context {context_name(z)} at region "
                         f"{tab.region_name(r)} for ({', '.join(tab.render(a) for a in args)}): "
                         f"claims {tab.render(s.result)} ! {tab.render_effect(s.effect)}, "
                         f"inferred {tab.render(got.type)} ! {tab.render_effect(got.effect)}")
    diags.extend(str(d) for d in check_override_condition(tab_s.M, p, tab_s.relevant))
    if tab_s.relevant is not None:
        diags.extend(str(d) for d in check_relevance_closure(tab_s.relevant, tab_s.F, tab_s.M, p))
    return diags
