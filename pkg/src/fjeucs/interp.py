"""Big-step reference interpreter with optional heap-typing instrumentation.

The interpreter follows the operational rules directly: locations are
sequential integers, objects are immutable snapshots replaced on field
update, and every builtin call draws one outcome through a chooser.
In instrumented mode it also records, for each allocated location, the
region the analysis would give it (``psi`` of the allocation context).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from .contexts import EMPTY_CONTEXT, Context, ContextPolicy
from .policy import Chooser, FirstChooser, Policy, Word, builtin_step
from .syntax import (NULLTYPE, STRING, THIS, Builtin, Cast, Concat, Expr, GetField,
                     IfEq, Invoke, Let, New, Null, Program, SetField, StrLit, Var,
                     entry_expr, param_name)

DEFAULT_FUEL = 1_000_000

Value = Optional[int]


@dataclass(frozen=True)
class Obj:
    cls: str
    fields: Mapping[str, Value]


@dataclass(frozen=True)
class SObj:
    text: str
    word: Word


HeapCell = Union[Obj, SObj]
Heap = dict[int, HeapCell]
Store = Mapping[str, Value]


class Stuck(Exception):
    """The run cannot continue (null dereference, failed cast, missing method...)."""

    def __init__(self, kind: str, detail: str = "", label: Optional[int] = None):
        self.kind, self.detail, self.label = kind, detail, label
        super().__init__(f"{kind}: {detail}" if detail else kind)


class OutOfFuel(Exception):
    pass


@dataclass
class EvalResult:
    value: Value
    heap: Heap
    trace: Word
    # instrumented mode: location -> ("obj", class, region) | ("str", tag class)
    heap_typing: dict[int, tuple] = field(default_factory=dict)
    steps: int = 0


def class_of(h: Heap, v: Value) -> str:
    if v is None:
        return NULLTYPE
    cell = h[v]
    return STRING if isinstance(cell, SObj) else cell.cls


def trace_class(w, pol: Policy) -> int:
    return pol.word_class(w)


class _Machine:
    def __init__(self, p: Program, pol: Policy, chooser: Chooser, fuel: int,
                 ctxpol: Optional[ContextPolicy], heap: Heap):
        self.p, self.pol, self.chooser = p, pol, chooser
        self.fuel = fuel
        self.steps = 0
        self.ctxpol = ctxpol
        self.heap = heap
        self.next_loc = max(heap, default=-1) + 1
        self.trace: list[str] = []
        self.pi: dict[int, tuple] = {}

    def alloc(self, cell: HeapCell, z: Context, label: Optional[int]) -> int:
        loc = self.next_loc
        self.next_loc += 1
        assert loc not in self.heap
        self.heap[loc] = cell
        if self.ctxpol is not None:
            if isinstance(cell, SObj):
                self.pi[loc] = ("str", self.pol.word_class(cell.word))
            else:
                self.pi[loc] = ("obj", cell.cls, self.ctxpol.psi(z, label))
        return loc

    def tick(self):
        self.steps += 1
        if self.steps > self.fuel:
            raise OutOfFuel(f"exhausted {self.fuel} steps")

    def deref(self, s: Store, x: str, label) -> tuple[int, HeapCell]:
        v = s[x]
        if v is None:
            raise Stuck("null-dereference", f"{x} is null", label)
        return v, self.heap[v]

    def string_arg(self, s: Store, x: str, label) -> SObj:
        _, cell = self.deref(s, x, label)
        if not isinstance(cell, SObj):
            raise Stuck("not-a-string", f"{x} is a {cell.cls}", label)
        return cell

    def eval(self, s: Store, e: Expr, z: Context) -> Value:
        # let spines are walked iteratively; nested calls recurse
        while isinstance(e, Let):
            self.tick()
            v = self.eval(s, e.bound, z)
            s = {**s, e.var: v}
            e = e.body
        self.tick()
        lab = e.label
        if isinstance(e, Var):
            return s[e.name]
        if isinstance(e, Null):
            return None
        if isinstance(e, IfEq):
            branch = e.then if s[e.left] == s[e.right] else e.orelse
            return self.eval(s, branch, z)
        if isinstance(e, New):
            flds = {f: None for f in sorted(self.p.fields.get(e.cls, ()))}
            return self.alloc(Obj(e.cls, flds), z, lab)
        if isinstance(e, Cast):
            v = self.eval(s, e.expr, z)
            c = class_of(self.heap, v)
            if not self.p.subclass_of(c, e.cls):
                raise Stuck("cast-failure", f"{c} is not a subclass of {e.cls}", lab)
            return v
        if isinstance(e, GetField):
            _, cell = self.deref(s, e.obj, lab)
            if isinstance(cell, SObj) or e.fld not in cell.fields:
                raise Stuck("missing-field", f"no field {e.fld}", lab)
            return cell.fields[e.fld]
        if isinstance(e, SetField):
            loc, cell = self.deref(s, e.obj, lab)
            if isinstance(cell, SObj) or e.fld not in cell.fields:
                raise Stuck("missing-field", f"no field {e.fld}", lab)
            v = s[e.value]
            self.heap[loc] = Obj(cell.cls, {**cell.fields, e.fld: v})
            return v
        if isinstance(e, Invoke):
            loc, cell = self.deref(s, e.obj, lab)
            cls = STRING if isinstance(cell, SObj) else cell.cls
            body = self.p.mtable.get((cls, e.method))
            if body is None or len(e.args) != self.p.arity.get(e.method, -1):
                raise Stuck("missing-method", f"{cls}.{e.method}", lab)
            callee = {THIS: loc}
            for i, y in enumerate(e.args, 1):
                callee[param_name(i)] = s[y]
            z2 = z
            if self.ctxpol is not None:
                region = self.pi[loc][2] if loc in self.pi else None
                z2 = self.ctxpol.phi(z, cls, region, e.method, lab)
            return self.eval(callee, body, z2)
        if isinstance(e, Builtin):
            args = [self.string_arg(s, y, lab) for y in e.args]
            text, word, trace = builtin_step(e.fn, [(a.text, a.word) for a in args],
                                             self.pol, self.chooser)
            self.trace.extend(trace)
            return self.alloc(SObj(text, tuple(word)), z, lab)
        if isinstance(e, StrLit):
            return self.alloc(SObj(e.text, self.pol.lit2word(e.text)), z, lab)
        if isinstance(e, Concat):
            a = self.string_arg(s, e.left, lab)
            b = self.string_arg(s, e.right, lab)
            return self.alloc(SObj(a.text + b.text, a.word + b.word), z, lab)
        raise TypeError(f"not an expression: {e!r}")


def eval_expr(s: Store, h: Heap, e: Expr, p: Program, pol: Policy,
              chooser: Optional[Chooser] = None, fuel: int = DEFAULT_FUEL,
              ctxpol: Optional[ContextPolicy] = None,
              z: Context = EMPTY_CONTEXT) -> EvalResult:
    """Evaluate ``e``; raises :class:`Stuck` or :class:`OutOfFuel`.

    The input heap is not modified.  Passing ``ctxpol`` turns on the
    heap-typing instrumentation.
    """
    m = _Machine(p, pol, chooser or FirstChooser(), fuel, ctxpol, dict(h))
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 20000))
    try:
        v = m.eval(dict(s), e, z)
    finally:
        sys.setrecursionlimit(old)
    return EvalResult(v, m.heap, tuple(m.trace), m.pi, m.steps)


def run_entry(p: Program, pol: Policy, cls: str, method: str,
              chooser: Optional[Chooser] = None, fuel: int = DEFAULT_FUEL,
              ctxpol: Optional[ContextPolicy] = None) -> EvalResult:
    return eval_expr({}, {}, entry_expr(p, cls, method), p, pol, chooser, fuel, ctxpol)


def heap_summary(h: Heap) -> list[str]:
    out = []
    for loc in sorted(h):
        cell = h[loc]
        if isinstance(cell, SObj):
            out.append(f"l{loc}: String {cell.text!r} tags={' '.join(cell.word) or 'eps'}")
        else:
            flds = ", ".join(f"{f}={'null' if v is None else 'l' + str(v)}"
                             for f, v in sorted(cell.fields.items()))
            out.append(f"l{loc}: {cell.cls}({flds})")
    return out
