"""Executable soundness testing: enumerate interpreter runs and compare
their trace classes against the inferred effect, check heap typings,
and generate random well-typed programs to feed both.
"""

from __future__ import annotations

import json
import random
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

from .contexts import ContextPolicy, make_context_policy
from .infer import AnalysisError, Analysis, ClassTable, analyze
from .interp import DEFAULT_FUEL, EvalResult, OutOfFuel, SObj, Stuck, run_entry, trace_class
from .lattice import RefinedType, string_type, subtype
from .parser import parse_program
from .policy import IndexChooser, Policy, RandomChooser
from .syntax import OBJECT, STRING, Program

# --------------------------------------------------------------------------
# heap typing
# --------------------------------------------------------------------------


def _value_type(result: EvalResult, v) -> Optional[RefinedType]:
    rec = result.heap_typing.get(v)
    if rec is None:
        return None
    if rec[0] == "str":
        return string_type([rec[1]])
    return RefinedType(rec[1], frozenset([rec[2]]))


def heap_typing_check(result: EvalResult, tab: ClassTable, pol: Optional[Policy] = None,
                      result_type: Optional[RefinedType] = None) -> list[str]:
    """Check the heap typing recorded by an instrumented run against ``tab``.

    Each string location must carry the tag class of its word; each object
    location must be a relevant (class, region) pair whose non-null fields
    have types below the field typing.  With ``result_type`` the final
    value is checked too.
    """
    pol = pol or tab.pol
    p = tab.p
    diags = []
    for loc in sorted(result.heap_typing):
        rec = result.heap_typing[loc]
        cell = result.heap.get(loc)
        if cell is None:
            diags.append(f"l{loc}: typed but not allocated")
            continue
        if rec[0] == "str":
            if not isinstance(cell, SObj):
                diags.append(f"l{loc}: typed as a string but holds {cell.cls}")
                continue
            got = pol.word_class(cell.word)
            if got != rec[1]:
                diags.append(f"l{loc}: string typed {pol.element_name(rec[1])} "
                             f"but its tag word has class {pol.element_name(got)}")
            continue
        _, cls, r = rec
        if isinstance(cell, SObj) or cell.cls != cls:
            diags.append(f"l{loc}: typed {cls} but holds {'String' if isinstance(cell, SObj) else cell.cls}")
            continue
        where = f"l{loc}: {cls}@{tab.region_name(r)}"
        if not tab.relevant(cls, r):
            diags.append(f"{where} is not a relevant type")
        for f, v in sorted(cell.fields.items()):
            if v is None:
                continue
            t = _value_type(result, v)
            expected = tab.get_field(f, cls, r)
            if t is None or not subtype(t, expected, p):
                diags.append(f"{where} field {f}: value {tab.render(t) if t else 'untyped'} "
                             f"not below {tab.render(expected)}")
    if result_type is not None and result.value is not None:
        t = _value_type(result, result.value)
        if t is None or not subtype(t, result_type, p):
            diags.append(f"result {tab.render(t) if t else 'untyped'} not below {tab.render(result_type)}")
    return diags


# --------------------------------------------------------------------------
# soundness checking
# --------------------------------------------------------------------------


@dataclass
class Counterexample:
    choices: tuple[int, ...]
    trace: tuple[str, ...]
    trace_class: str
    detail: str = ""


@dataclass
class SoundnessReport:
    entry: str
    effect: list[str]
    runs: int = 0
    terminated: int = 0
    stuck: int = 0
    out_of_fuel: int = 0
    exhaustive: bool = True
    classes_seen: list[str] = field(default_factory=list)
    counterexamples: list[Counterexample] = field(default_factory=list)
    heap_diagnostics: list[str] = field(default_factory=list)
    stuck_kinds: dict[str, int] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and not self.counterexamples and not self.heap_diagnostics


def _enumerate(run, budget: int, state: dict):
    """Depth-first over choice sequences; yields (chooser, outcome) for each run.

    ``run(chooser)`` executes once.  Alternatives are scheduled for every
    choice point past the replayed prefix, so each sequence is visited once.
    """
    stack: list[tuple[int, ...]] = [()]
    n = 0
    while stack and n < budget:
        prefix = stack.pop()
        ch = IndexChooser(prefix)
        outcome = run(ch)
        n += 1
        for i in range(len(ch.taken) - 1, len(prefix) - 1, -1):
            base = tuple(ch.taken[:i])
            for c in range(ch.options[i] - 1, 0, -1):
                stack.append(base + (c,))
        yield ch, outcome
    state["exhausted"] = not stack


def soundness_check(p: Program, entry: tuple[str, str], pol: Policy, ctxpol: ContextPolicy,
                    budget: int = 64, fuel: int = 20_000, seed: Optional[int] = None,
                    deep: bool = True, analysis: Optional[Analysis] = None) -> SoundnessReport:
    """Run ``entry`` under many builtin resolutions; each terminating run's
    trace class must belong to the inferred effect.

    Resolutions are enumerated depth-first up to ``budget`` runs, or sampled
    with a seeded random chooser when ``seed`` is given.  Stuck and
    out-of-fuel runs are counted and skipped.
    """
    name = f"{entry[0]}.{entry[1]}"
    try:
        an = analysis or analyze(p, pol, ctxpol, [entry])
    except AnalysisError as err:
        return SoundnessReport(name, [], error=f"analysis failed: {err}")
    u = an.effect
    rep = SoundnessReport(name, sorted(pol.element_name(x) for x in u))
    seen: set[int] = set()
    result_type = an.results[0].type

    def once(chooser):
        try:
            return run_entry(p, pol, entry[0], entry[1], chooser, fuel, ctxpol)
        except Stuck as s:
            return s
        except OutOfFuel as s:
            return s

    state = {"exhausted": False}
    if seed is None:
        runs = _enumerate(once, budget, state)
    else:
        rng = random.Random(seed)
        runs = ((None, once(RandomChooser(rng.randrange(2**32)))) for _ in range(budget))
    for ch, out in runs:
        rep.runs += 1
        if isinstance(out, Stuck):
            rep.stuck += 1
            rep.stuck_kinds[out.kind] = rep.stuck_kinds.get(out.kind, 0) + 1
            continue
        if isinstance(out, OutOfFuel):
            rep.out_of_fuel += 1
            continue
        rep.terminated += 1
        c = trace_class(out.trace, pol)
        seen.add(c)
        choices = tuple(ch.taken) if ch is not None else ()
        if c not in u:
            rep.counterexamples.append(Counterexample(choices, out.trace, pol.element_name(c)))
        if deep:
            for d in heap_typing_check(out, an.table, pol, result_type):
                rep.heap_diagnostics.append(f"run {list(choices)}: {d}")
    rep.exhaustive = state["exhausted"]
    rep.classes_seen = sorted(pol.element_name(x) for x in seen)
    return rep


# --------------------------------------------------------------------------
# random programs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GenBounds:
    classes: int = 4       # user classes besides Nat and Main
    fields: int = 2        # per class, at most
    methods: int = 4       # distinct method names
    statements: int = 6    # per body, at most
    depth: int = 2         # expression nesting
    chain: int = 3         # length of the Nat chain, which bounds recursion
    literals: tuple[str, ...] = ("a", "b", "<script>")


DEFAULT_BUILTINS = {"getString": 0, "putString": 1}


class _Gen:
    def __init__(self, rng: random.Random, b: GenBounds, builtins: Mapping[str, int]):
        self.rng, self.b = rng, b
        self.builtins = sorted(builtins.items())
        self.parent: dict[str, str] = {}
        self.fields: dict[str, list[tuple[str, str]]] = {}
        self.sigs: dict[str, tuple[str, str, str]] = {}  # method -> (owner, ret, arg)
        self.counter = 0

    # -- class structure ---------------------------------------------------
    def classes(self) -> list[str]:
        return list(self.parent)

    def sub(self, c: str, d: str) -> bool:
        if d == OBJECT:
            return True
        while c != d:
            if c not in self.parent:
                return False
            c = self.parent[c]
        return True

    def all_fields(self, c: str) -> list[tuple[str, str]]:
        out = []
        while c in self.parent:
            out += self.fields[c]
            c = self.parent[c]
        return out

    def methods_of(self, c: str) -> list[str]:
        return [m for m, (owner, _, _) in self.sigs.items() if self.sub(c, owner)]

    def some_type(self) -> str:
        r = self.rng.random()
        if r < 0.4:
            return STRING
        if r < 0.5:
            return OBJECT
        return self.rng.choice(self.classes())

    def fresh(self) -> str:
        self.counter += 1
        return f"v{self.counter}"

    def structure(self):
        rng, b = self.rng, self.b
        n = rng.randint(1, b.classes)
        for i in range(n):
            name = f"K{i}"
            self.parent[name] = rng.choice([OBJECT] + [f"K{j}" for j in range(i)])
        k = 0
        for c in self.classes():
            self.fields[c] = []
            for _ in range(rng.randint(0, b.fields)):
                self.fields[c].append((f"f{k}", self.some_type()))
                k += 1
        for i in range(rng.randint(1, b.methods)):
            self.sigs[f"m{i}"] = (rng.choice(self.classes()), self.some_type(), self.some_type())

    # -- expressions -------------------------------------------------------
    def assignable(self, tx: str, t: str) -> bool:
        if tx == "Nat":
            return t == "Nat"
        return tx == t or t == OBJECT or (tx in self.parent and t in self.parent and self.sub(tx, t))

    def vars_below(self, env, t: str) -> list[str]:
        return [x for x, tx in env if self.assignable(tx, t)]

    def expr(self, env, t: str, depth: int) -> str:
        rng = self.rng
        opts = []
        vs = self.vars_below(env, t)
        if vs:
            opts.append(lambda: rng.choice(vs))
        readable = [(x, f) for x, tx in env if tx in self.parent
                    for f, ft in self.all_fields(tx) if self.assignable(ft, t)]
        if readable:
            opts.append(lambda: "%s.%s" % rng.choice(readable))
        if t == STRING:
            opts.append(lambda: '"%s"' % rng.choice(self.b.literals))
            strs = [x for x, tx in env if tx == STRING]
            usable = [(fn, n) for fn, n in self.builtins if n == 0 or strs]
            if usable:
                def call():
                    fn, n = rng.choice(usable)
                    return f"{fn}({', '.join(rng.choice(strs) for _ in range(n))})"
                opts.append(call)
            if len(strs) >= 1:
                opts.append(lambda: f"{rng.choice(strs)} + {rng.choice(strs)}")
            objs = [x for x, tx in env if tx == OBJECT]
            if objs:
                opts.append(lambda: f"(String) {rng.choice(objs)}")
        else:
            news = [c for c in self.classes() if self.sub(c, t)] if t != OBJECT else self.classes()
            if news:
                opts.append(lambda: f"new {rng.choice(news)}()")
                opts.append(lambda: f"new {rng.choice(news)}()")
            opts.append(lambda: "null")
            supers = [x for x, tx in env if tx not in ("Nat",) and tx != t
                      and (tx == OBJECT or (tx in self.parent and t in self.parent and self.sub(t, tx)))]
            if supers and t != OBJECT:
                opts.append(lambda: f"({t}) {rng.choice(supers)}")
            if t == OBJECT:
                opts.append(lambda: '"%s"' % rng.choice(self.b.literals))
        if depth > 0 and rng.random() < 0.3:
            cands = [(x, y) for x, tx in env for y, ty in env if tx != "Nat" and ty != "Nat"]
            if cands:
                x, y = rng.choice(cands)
                a = self.expr(env, t, depth - 1)
                c = self.expr(env, t, depth - 1)
                return f"if ({x} == {y}) {{ return {a}; }} else {{ return {c}; }}"
        return rng.choice(opts)()

    # -- statements --------------------------------------------------------
    def body(self, env: list[tuple[str, str]], ret: str, guard: tuple[str, str]) -> list[str]:
        rng = self.rng
        env = list(env)
        q, nul = guard
        out = []
        for _ in range(rng.randint(1, self.b.statements)):
            kind = rng.random()
            if kind < 0.35:
                t = self.some_type()
                v = self.fresh()
                out.append(f"{t} {v} = {self.expr(env, t, self.b.depth)};")
                env.append((v, t))
            elif kind < 0.5:
                targets = [(x, f, ft) for x, tx in env if tx in self.parent
                           for f, ft in self.all_fields(tx)]
                if targets:
                    x, f, ft = rng.choice(targets)
                    out.append(f"{x}.{f} = {self.expr(env, ft, 1)};")
            elif kind < 0.85:
                calls = [(x, m) for x, tx in env if tx in self.parent for m in self.methods_of(tx)]
                if calls:
                    x, m = rng.choice(calls)
                    _, rt, at = self.sigs[m]
                    arg = self.expr(env, at, 0)
                    v = self.fresh()
                    dflt = '""' if rt == STRING else "null"
                    out.append(f"{rt} {v} = if ({q} == {nul}) {{ return {dflt}; }} "
                               f"else {{ return {x}.{m}({q}, {arg}); }};")
                    env.append((v, rt))
            else:
                strs = [x for x, tx in env if tx == STRING]
                sinks = [(fn, n) for fn, n in self.builtins if n >= 1]
                if strs and sinks:
                    fn, n = rng.choice(sinks)
                    out.append(f"{fn}({', '.join(rng.choice(strs) for _ in range(n))});")
        out.append(f"return {self.expr(env, ret, self.b.depth)};")
        return out

    def method(self, c: str, m: str) -> list[str]:
        _, rt, at = self.sigs[m]
        env = [("this", c), ("a", at)]
        lines = [f"  {rt} {m}(Nat n, {at} a) {{", "    Nat q = n.pred;", "    Nat nul = null;"]
        lines += ["    " + s for s in self.body(env, rt, ("q", "nul"))]
        return lines + ["  }"]

    def program(self) -> str:
        rng, b = self.rng, self.b
        self.structure()
        out = ["class Nat {", "  Nat pred;", "}", ""]
        for c in self.classes():
            parent = self.parent[c]
            out.append(f"class {c}" + ("" if parent == OBJECT else f" extends {parent}") + " {")
            for f, ft in self.fields[c]:
                out.append(f"  {ft} {f};")
            for m, (owner, _, _) in self.sigs.items():
                if owner == c or (self.sub(c, owner) and rng.random() < 0.4):
                    out += self.method(c, m)
            out += ["}", ""]
        main = ["  String main() {", "    Nat n0 = new Nat();"]
        for i in range(1, b.chain + 1):
            main += [f"    Nat n{i} = new Nat();", f"    n{i}.pred = n{i - 1};"]
        main += ["    Nat nul = null;"]
        env = [(f"o{i}", c) for i, c in enumerate(self.classes())]
        main += [f"    {c} o{i} = new {c}();" for i, c in enumerate(self.classes())]
        main += ["    " + s for s in self.body(env, STRING, (f"n{b.chain}", "nul"))]
        out += ["class Main {"] + main + ["  }", "}", ""]
        return "\n".join(out)


def generate_source(seed: int, bounds: GenBounds = GenBounds(),
                    builtins: Optional[Mapping[str, int]] = None) -> str:
    """Source text of a random program whose entry point is ``Main.main``."""
    return _Gen(random.Random(seed), bounds, builtins or DEFAULT_BUILTINS).program()


def generate_program(seed: int, bounds: GenBounds = GenBounds(),
                     builtins: Optional[Mapping[str, int]] = None) -> Program:
    """Random well-formed, standardly typed program; deterministic in ``seed``.

    Every call passes the predecessor of a ``Nat`` argument and is guarded
    by a null test on it, so recursion depth is bounded by the chain built
    in ``Main.main``.
    """
    return parse_program(generate_source(seed, bounds, builtins))


def policy_builtins(pol: Policy) -> dict[str, int]:
    """String builtins of a policy as name -> arity."""
    return {name: b.arity for name, b in pol.builtins.items()}


# --------------------------------------------------------------------------
# campaigns and summaries
# --------------------------------------------------------------------------


@dataclass
class FuzzCase:
    seed: int
    k: int
    runs: int
    terminated: int
    stuck: int
    out_of_fuel: int
    counterexamples: int
    heap_diagnostics: int
    seconds: float
    error: Optional[str] = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.error is None and not self.counterexamples and not self.heap_diagnostics


def fuzz_one(seed: int, k: int, pol: Policy, bounds: GenBounds = GenBounds(),
             budget: int = 16, fuel: int = 20_000, deep: bool = True) -> FuzzCase:
    start = time.perf_counter()
    try:
        p = generate_program(seed, bounds, policy_builtins(pol))
    except Exception as err:  # a generator bug, reported rather than raised
        return FuzzCase(seed, k, 0, 0, 0, 0, 0, 0, time.perf_counter() - start,
                        error=f"generator: {err}")
    rep = soundness_check(p, ("Main", "main"), pol, make_context_policy("kcfa", k),
                          budget=budget, fuel=fuel, deep=deep)
    detail = "; ".join([f"trace {c.trace} has class {c.trace_class}" for c in rep.counterexamples]
                       + rep.heap_diagnostics[:3])
    return FuzzCase(seed, k, rep.runs, rep.terminated, rep.stuck, rep.out_of_fuel,
                    len(rep.counterexamples), len(rep.heap_diagnostics),
                    time.perf_counter() - start, rep.error, detail)


def _fuzz_star(args):
    return fuzz_one(*args)


def fuzz_campaign(seeds: Sequence[int], ks: Sequence[int], pol: Policy,
                  bounds: GenBounds = GenBounds(), budget: int = 16, fuel: int = 20_000,
                  deep: bool = True, jobs: int = 1) -> list[FuzzCase]:
    """Soundness checks over generated programs; independent cases run in parallel."""
    work = [(s, k, pol, bounds, budget, fuel, deep) for s in seeds for k in ks]
    if jobs <= 1:
        return [fuzz_one(*w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_fuzz_star, work, chunksize=8))


def summary_json(cases: Sequence[FuzzCase]) -> str:
    total = {"cases": len(cases),
             "failures": sum(not c.ok for c in cases),
             "runs": sum(c.runs for c in cases),
             "terminated": sum(c.terminated for c in cases),
             "stuck": sum(c.stuck for c in cases),
             "out_of_fuel": sum(c.out_of_fuel for c in cases),
             "counterexamples": sum(c.counterexamples for c in cases)}
    return json.dumps({"schema": "fjeucs-fuzz/1", "summary": total,
                       "cases": [asdict(c) for c in cases]}, indent=2)


def summary_junit(cases: Sequence[FuzzCase], name: str = "fjeucs-soundness") -> str:
    suite = ET.Element("testsuite", name=name, tests=str(len(cases)),
                       failures=str(sum(c.error is None and not c.ok for c in cases)),
                       errors=str(sum(c.error is not None for c in cases)),
                       time=f"{sum(c.seconds for c in cases):.3f}")
    for c in cases:
        tc = ET.SubElement(suite, "testcase", classname=f"k{c.k}", name=f"seed{c.seed}",
                           time=f"{c.seconds:.3f}")
        if c.error is not None:
            ET.SubElement(tc, "error", message=c.error)
        elif not c.ok:
            ET.SubElement(tc, "failure", message=c.detail or "containment failed")
        else:
            ET.SubElement(tc, "system-out").text = (
                f"runs={c.runs} terminated={c.terminated} stuck={c.stuck} out_of_fuel={c.out_of_fuel}")
    return ET.tostring(suite, encoding="unicode")
