"""Core FJEUCS abstract syntax, program tables and well-formedness checks.

Expressions are in let normal form: every operand position of a field
access, update, call, builtin, comparison or concatenation is a variable.
Each node carries an integer ``label`` (its program position).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields, replace
from functools import cached_property
from typing import Iterator, Mapping, Optional, Union

OBJECT = "Object"
STRING = "String"
NULLTYPE = "NullType"
BUILTIN_CLASSES = (OBJECT, STRING, NULLTYPE)

THIS = "this"


def param_name(i: int) -> str:
    """Canonical name of the i-th formal argument (1-based) of a method."""
    return f"x${i}"


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class Let:
    var: str
    bound: "Expr"
    body: "Expr"
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class IfEq:
    left: str
    right: str
    then: "Expr"
    orelse: "Expr"
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class Null:
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class New:
    cls: str
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class Cast:
    expr: "Expr"
    cls: str
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class GetField:
    obj: str
    fld: str
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class SetField:
    obj: str
    fld: str
    value: str
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class Invoke:
    obj: str
    method: str
    args: tuple[str, ...] = ()
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class Builtin:
    fn: str
    args: tuple[str, ...] = ()
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class StrLit:
    text: str
    label: Optional[int] = field(default=None, kw_only=True)


@dataclass(frozen=True)
class Concat:
    left: str
    right: str
    label: Optional[int] = field(default=None, kw_only=True)


Expr = Union[Var, Let, IfEq, Null, New, Cast, GetField, SetField, Invoke,
             Builtin, StrLit, Concat]


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Let):
        return (e.bound, e.body)
    if isinstance(e, IfEq):
        return (e.then, e.orelse)
    if isinstance(e, Cast):
        return (e.expr,)
    return ()


def walk(e: Expr) -> Iterator[Expr]:
    """Preorder traversal (node before its sub-expressions, left to right)."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Let):
        return free_vars(e.bound) | (free_vars(e.body) - {e.var})
    if isinstance(e, IfEq):
        return frozenset([e.left, e.right]) | free_vars(e.then) | free_vars(e.orelse)
    if isinstance(e, Cast):
        return free_vars(e.expr)
    if isinstance(e, GetField):
        return frozenset([e.obj])
    if isinstance(e, SetField):
        return frozenset([e.obj, e.value])
    if isinstance(e, Invoke):
        return frozenset((e.obj,) + e.args)
    if isinstance(e, Builtin):
        return frozenset(e.args)
    if isinstance(e, Concat):
        return frozenset([e.left, e.right])
    return frozenset()


def label_expr(e: Expr, start: int) -> tuple[Expr, int]:
    """Relabel ``e`` in preorder starting at ``start``; returns (expr, next label)."""
    counter = start

    def go(node: Expr) -> Expr:
        nonlocal counter
        lab = counter
        counter += 1
        if isinstance(node, Let):
            bound = go(node.bound)
            return replace(node, bound=bound, body=go(node.body), label=lab)
        if isinstance(node, IfEq):
            then = go(node.then)
            return replace(node, then=then, orelse=go(node.orelse), label=lab)
        if isinstance(node, Cast):
            return replace(node, expr=go(node.expr), label=lab)
        return replace(node, label=lab)

    # let-chains are right-nested; avoid Python recursion limits on long bodies
    spine: list[Let] = []
    node = e
    while isinstance(node, Let):
        spine.append(node)
        node = node.body
    if not spine:
        out = go(e)
        return out, counter
    parts = []
    for let in spine:
        lab = counter
        counter += 1
        parts.append((let, lab, go(let.bound)))
    out = go(node)
    for let, lab, bound in reversed(parts):
        out = Let(let.var, bound, out, label=lab)
    return out, counter


# --------------------------------------------------------------------------
# Programs
# --------------------------------------------------------------------------


class UnknownClass(KeyError):
    pass


@dataclass(frozen=True)
class StdClassTable:
    """Standard (class-only) typings: F0(C, f) and M0(C, m)."""

    F0: Mapping[tuple[str, str], str]
    M0: Mapping[tuple[str, str], tuple[tuple[str, ...], str]]


@dataclass(frozen=True, eq=False)
class Program:
    """An FJEUCS program in relational form.

    ``subclass`` holds pairs ``(D, C)`` meaning D is an immediate subclass
    of C.  NullType is implicitly below every class and never listed.
    """

    classes: frozenset[str]
    subclass: frozenset[tuple[str, str]]
    fields: Mapping[str, frozenset[str]]
    methods: Mapping[str, frozenset[str]]
    mtable: Mapping[tuple[str, str], Expr]
    arity: Mapping[str, int]
    std: Optional[StdClassTable] = None
    positions: Mapping[int, tuple[int, int]] = field(default_factory=dict)

    @cached_property
    def all_classes(self) -> frozenset[str]:
        return self.classes | frozenset(BUILTIN_CLASSES)

    @cached_property
    def parent(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for d, c in sorted(self.subclass):
            out.setdefault(d, c)
        return out

    @cached_property
    def _ancestors(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, tuple[str, ...]] = {}
        for c in self.all_classes:
            chain = [c]
            seen = {c}
            cur = c
            while cur in self.parent:
                cur = self.parent[cur]
                if cur in seen:
                    break
                seen.add(cur)
                chain.append(cur)
            out[c] = tuple(chain)
        return out

    def ancestors(self, c: str) -> tuple[str, ...]:
        """``c`` followed by its proper superclasses, nearest first."""
        if c == NULLTYPE:
            return (NULLTYPE,)
        try:
            return self._ancestors[c]
        except KeyError:
            raise UnknownClass(c) from None

    def subclass_of(self, c1: str, c2: str) -> bool:
        for c in (c1, c2):
            if c not in self.all_classes:
                raise UnknownClass(c)
        if c1 == NULLTYPE:
            return True
        return c2 in self._ancestor_sets[c1]

    @cached_property
    def _ancestor_sets(self) -> dict[str, frozenset[str]]:
        return {c: frozenset(a) for c, a in self._ancestors.items()}

    def lcs(self, c1: str, c2: str) -> str:
        if not self.subclass_of(c1, c1) or not self.subclass_of(c2, c2):
            raise UnknownClass(c1)
        if c1 == NULLTYPE:
            return c2
        if c2 == NULLTYPE:
            return c1
        others = self._ancestor_sets[c2]
        for a in self.ancestors(c1):
            if a in others:
                return a
        return OBJECT

    @cached_property
    def _subclasses(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {c: [] for c in self.all_classes}
        for c in sorted(self.all_classes):
            if c == NULLTYPE:
                continue
            for a in self.ancestors(c):
                out[a].append(c)
        return {c: tuple(v) for c, v in out.items()}

    def subclasses(self, c: str) -> tuple[str, ...]:
        """Declared classes D with D <= c (NullType excluded), sorted."""
        return self._subclasses[c]

    def depth(self, c: str) -> int:
        return len(self.ancestors(c)) - 1

    def field_owner(self, c: str, f: str) -> str:
        """Topmost ancestor of ``c`` that still has field ``f``."""
        owner = c
        for a in self.ancestors(c):
            if f in self.fields.get(a, ()):
                owner = a
            else:
                break
        return owner

    @cached_property
    def labels(self) -> dict[int, Expr]:
        out: dict[int, Expr] = {}
        for body in self.bodies():
            for node in walk(body):
                if node.label is not None:
                    out[node.label] = node
        return out

    def bodies(self) -> Iterator[Expr]:
        """Each distinct method body once (inherited bodies are shared)."""
        seen: set[int] = set()
        for key in sorted(self.mtable):
            body = self.mtable[key]
            if id(body) not in seen:
                seen.add(id(body))
                yield body

    @cached_property
    def max_label(self) -> int:
        return max(self.labels, default=0)

    @cached_property
    def alloc_sites(self) -> dict[int, str]:
        return {lab: e.cls for lab, e in self.labels.items() if isinstance(e, New)}


def subclass_of(c1: str, c2: str, p: Program) -> bool:
    return p.subclass_of(c1, c2)


def least_common_superclass(c1: str, c2: str, p: Program) -> str:
    return p.lcs(c1, c2)


# --------------------------------------------------------------------------
# Well-formedness
# --------------------------------------------------------------------------


def check_wellformed(p: Program) -> list[str]:
    """Return human-readable diagnostics; an empty list means well-formed."""
    diags: list[str] = []
    classes = p.all_classes

    parents: dict[str, list[str]] = {}
    for d, c in sorted(p.subclass):
        if d not in classes or c not in classes:
            diags.append(f"subclass pair ({d}, {c}) mentions an undeclared class")
            continue
        if NULLTYPE in (d, c):
            diags.append("NullType may not appear in the subclass relation")
            continue
        parents.setdefault(d, []).append(c)
    tree_ok = True
    for c in sorted(classes - {NULLTYPE}):
        ps = parents.get(c, [])
        if c == OBJECT:
            if ps:
                diags.append("subclass relation not a tree: Object has a superclass")
                tree_ok = False
        elif len(ps) != 1:
            diags.append(f"subclass relation not a tree: {c} has {len(ps)} immediate superclasses")
            tree_ok = False
    if tree_ok:
        for c in sorted(classes - {NULLTYPE}):
            seen = {c}
            cur = c
            while cur != OBJECT:
                cur = parents[cur][0]
                if cur in seen:
                    diags.append(f"subclass relation not a tree: cycle through {c}")
                    tree_ok = False
                    break
                seen.add(cur)
            if not tree_ok:
                break
    if tree_ok:
        if parents.get(STRING, [OBJECT]) != [OBJECT]:
            diags.append("String must be an immediate subclass of Object")
        for d, c in p.subclass:
            if c == STRING:
                diags.append(f"class {d} may not extend String")

    for c in (NULLTYPE, STRING):
        if p.fields.get(c) or p.methods.get(c):
            diags.append(f"{c} may not have fields or methods")

    if tree_ok:
        for c in sorted(classes - {NULLTYPE}):
            for a in p.ancestors(c)[1:]:
                if not set(p.fields.get(a, ())) <= set(p.fields.get(c, ())):
                    diags.append(f"field inheritance violated: {c} lacks fields of {a}")
                if not set(p.methods.get(a, ())) <= set(p.methods.get(c, ())):
                    diags.append(f"method inheritance violated: {c} lacks methods of {a}")
        if p.fields.get(OBJECT) or p.methods.get(OBJECT):
            diags.append("Object may not declare fields or methods (String would inherit them)")

    for c in sorted(classes):
        for m in sorted(p.methods.get(c, ())):
            if (c, m) not in p.mtable:
                diags.append(f"mtable({c}, {m}) undefined")
            if m not in p.arity:
                diags.append(f"arity of method {m} undefined")
    for (c, m) in p.mtable:
        if m not in p.methods.get(c, ()):
            diags.append(f"mtable entry for {c}.{m} but {m} not in methods({c})")

    seen_labels: dict[int, int] = {}
    for body in p.bodies():
        for node in walk(body):
            if node.label is None:
                diags.append(f"unlabelled {type(node).__name__} node")
                continue
            seen_labels[node.label] = seen_labels.get(node.label, 0) + 1
    for lab, n in sorted(seen_labels.items()):
        if n > 1:
            diags.append(f"label {lab} appears {n} times")

    for (c, m), body in sorted(p.mtable.items()):
        n = p.arity.get(m, 0)
        allowed = {THIS} | {param_name(i) for i in range(1, n + 1)}
        extra = free_vars(body) - allowed
        if extra:
            diags.append(f"{c}.{m}: free variables {sorted(extra)}")
        for node in walk(body):
            if isinstance(node, New):
                if node.cls in (STRING, NULLTYPE):
                    diags.append(f"{c}.{m}: cannot instantiate {node.cls}")
                elif node.cls not in classes:
                    diags.append(f"{c}.{m}: unknown class {node.cls}")
            elif isinstance(node, Cast):
                if node.cls == NULLTYPE:
                    diags.append(f"{c}.{m}: cast to NullType")
                elif node.cls not in classes:
                    diags.append(f"{c}.{m}: unknown class {node.cls}")
            elif isinstance(node, Invoke) and node.method in p.arity:
                if len(node.args) != p.arity[node.method]:
                    diags.append(f"{c}.{m}: call of {node.method} with {len(node.args)} "
                                 f"arguments, arity is {p.arity[node.method]}")

    if p.std is not None:
        diags.extend(_check_std(p))
    return diags


def _check_std(p: Program) -> list[str]:
    diags = []
    std = p.std
    for c in sorted(p.classes):
        for f in sorted(p.fields.get(c, ())):
            if (c, f) not in std.F0:
                diags.append(f"F0({c}, {f}) undefined")
        parent = p.parent.get(c)
        for f in sorted(p.fields.get(parent, ()) if parent else ()):
            if (c, f) in std.F0 and (parent, f) in std.F0 and std.F0[(c, f)] != std.F0[(parent, f)]:
                diags.append(f"F0 not invariant for field {f} in {c}")
        for m in sorted(p.methods.get(c, ())):
            if (c, m) not in std.M0:
                diags.append(f"M0({c}, {m}) undefined")
                continue
            params, _ = std.M0[(c, m)]
            if len(params) != p.arity.get(m, len(params)):
                diags.append(f"M0({c}, {m}) has {len(params)} parameters, arity is {p.arity[m]}")
            parent = p.parent.get(c)
            if parent is not None and (parent, m) in std.M0:
                if std.M0[(parent, m)][0] != params:
                    diags.append(f"{c}.{m} overrides {parent}.{m} with different parameter classes")
    return diags


def expr_fields() -> dict[str, tuple[str, ...]]:
    """Field names per node type, excluding the label (used by printers/tests)."""
    out = {}
    for cls in (Var, Let, IfEq, Null, New, Cast, GetField, SetField, Invoke,
                Builtin, StrLit, Concat):
        out[cls.__name__] = tuple(f.name for f in dc_fields(cls) if f.name != "label")
    return out


def entry_expr(p: Program, cls: str, method: str) -> Expr:
    """Closed expression that calls ``cls.method`` on fresh objects.

    Ordinary parameters receive a fresh object of their declared class,
    String parameters the empty literal.  Labels continue after the
    program's own, so analysis and interpreter agree on positions.
    """
    if (cls, method) not in p.mtable:
        raise KeyError(f"no method {cls}.{method}")
    params = p.std.M0[(cls, method)][0] if p.std else (OBJECT,) * p.arity[method]
    binds: list[tuple[str, Expr]] = [("main$recv", New(cls))]
    args = []
    for i, t in enumerate(params, 1):
        name = f"main$arg{i}"
        binds.append((name, StrLit("") if t == STRING else New(t)))
        args.append(name)
    body: Expr = Invoke("main$recv", method, tuple(args))
    for v, e in reversed(binds):
        body = Let(v, e, body)
    out, _ = label_expr(body, p.max_label + 1)
    return out


def parse_entry(text: str) -> tuple[str, str]:
    cls, dot, m = text.partition(".")
    if not dot or not cls or not m:
        raise ValueError(f"entry must look like Class.method, got {text!r}")
    return cls, m
