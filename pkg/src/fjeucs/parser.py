"""Concrete syntax for FJEUCS programs and policy files.

Programs use a small Java-like surface::

    class D extends Object {
      String s;
      String cD(String v) { this.s = v; }
    }

Method bodies are statement sequences (``var x = e;``, ``T x = e;``,
``x = e;``, ``e;``, ``if (a == b) {..} else {..}``, ``return e;``) that are
desugared into nested lets.  Nested operands are let-normalized into fresh
temporaries in left-to-right evaluation order.  Labels are assigned in
preorder, class by class and method by method in source order.

String literals use backslash escapes: ``\\n \\t \\r \\\\ \\" \\'`` and
``\\uXXXX``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Union

import numpy as np

from .policy import (ArgClassLetter, ArgWord, BuiltinSpec, Letter, Lit2WordRule,
                     Monoid, Outcome, Policy, PolicyAutomaton, PolicyError, TextArg,
                     TextFn, TextFresh, TextLit, TEXT_FUNCTIONS, transition_monoid)
from .syntax import (NULLTYPE, OBJECT, STRING, THIS, Builtin, Cast, Concat, Expr,
                     GetField, IfEq, Invoke, Let, New, Null, Program, SetField,
                     StdClassTable, StrLit, Var, check_wellformed, label_expr,
                     param_name, walk)


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg, self.line, self.col = msg, line, col
        super().__init__(f"{line}:{col}: {msg}" if line else msg)


class IllFormedProgram(ValueError):
    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("ill-formed program: " + "; ".join(diagnostics))


# --------------------------------------------------------------------------
# Lexing
# --------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+|//[^\n]*|/\*.*?\*/)
  | (?P<str>"(?:\\.|[^"\\\n])*")
  | (?P<id>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<sym>==|!=|[{}();,.=+])
""", re.VERBOSE | re.DOTALL)

KEYWORDS = {"class", "extends", "var", "return", "if", "else", "new", "null", "this"}

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "'": "'"}


@dataclass(frozen=True)
class Tok:
    kind: str  # id | kw | str | sym | eof
    text: str
    line: int
    col: int


def unescape(body: str, line: int = 0, col: int = 0) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        nxt = body[i + 1]
        if nxt in _ESCAPES:
            out.append(_ESCAPES[nxt])
            i += 2
        elif nxt == "u" and re.fullmatch(r"[0-9a-fA-F]{4}", body[i + 2:i + 6]):
            out.append(chr(int(body[i + 2:i + 6], 16)))
            i += 6
        else:
            raise ParseError(f"unknown escape \\{nxt}", line, col)
    return "".join(out)


def escape(text: str) -> str:
    out = []
    rev = {v: k for k, v in _ESCAPES.items() if k != "'"}
    for ch in text:
        if ch in rev:
            out.append("\\" + rev[ch])
        elif ord(ch) < 32 or ord(ch) == 127:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def tokenize(text: str) -> list[Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "str":
            toks.append(Tok("str", unescape(s[1:-1], line, col), line, col))
        elif kind == "id":
            toks.append(Tok("kw" if s in KEYWORDS else "id", s, line, col))
        elif kind == "sym":
            toks.append(Tok("sym", s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rindex("\n") + 1
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - line_start + 1))
    return toks


# --------------------------------------------------------------------------
# Surface syntax
# --------------------------------------------------------------------------

Pos = tuple[int, int]


@dataclass
class S:
    kind: str
    pos: Pos
    args: tuple = ()


@dataclass
class MethodDecl:
    name: str
    params: list[tuple[str, str]]  # (user name, class)
    result: str
    body: Expr  # core expression over canonical parameter names, unlabelled
    pos: Pos = (0, 0)
    positions: dict = field(default_factory=dict)  # id(node) -> Pos


@dataclass
class ClassDecl:
    name: str
    parent: str
    fields: list[tuple[str, str]]  # (field, class)
    methods: list[MethodDecl]
    pos: Pos = (0, 0)


def _type_name(t: str) -> str:
    return OBJECT if t == "void" else t


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Optional[Tok] = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def at(self, kind: str, text: Optional[str] = None, tok: Optional[Tok] = None) -> bool:
        tok = tok or self.tok
        return tok.kind == kind and (text is None or tok.text == text)

    def expect(self, kind: str, text: Optional[str] = None) -> Tok:
        if not self.at(kind, text):
            want = repr(text) if text else kind
            got = repr(self.tok.text) if self.tok.kind != "eof" else "end of input"
            self.error(f"expected {want}, found {got}")
        tok = self.tok
        self.i += 1
        return tok

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[Tok]:
        if self.at(kind, text):
            tok = self.tok
            self.i += 1
            return tok
        return None

    # -- declarations
    def program(self) -> list[tuple]:
        classes = []
        while not self.at("eof"):
            classes.append(self.class_decl())
        return classes

    def class_decl(self):
        start = self.expect("kw", "class")
        name = self.expect("id").text
        parent = OBJECT
        if self.accept("kw", "extends"):
            parent = self.expect("id").text
        self.expect("sym", "{")
        fields, methods = [], []
        while not self.accept("sym", "}"):
            ttok = self.expect("id")
            mname = self.expect("id")
            if self.accept("sym", ";"):
                fields.append((mname.text, _type_name(ttok.text), (mname.line, mname.col)))
                continue
            self.expect("sym", "(")
            params = []
            if not self.at("sym", ")"):
                while True:
                    pt = self.expect("id").text
                    pn = self.expect("id")
                    params.append((pn.text, _type_name(pt), (pn.line, pn.col)))
                    if not self.accept("sym", ","):
                        break
            self.expect("sym", ")")
            body = self.block()
            methods.append((mname.text, params, _type_name(ttok.text), body, (mname.line, mname.col)))
        return name, parent, fields, methods, (start.line, start.col)

    # -- statements
    def block(self) -> S:
        start = self.expect("sym", "{")
        stmts = []
        while not self.accept("sym", "}"):
            if self.at("eof"):
                self.error("unterminated block")
            stmts.append(self.statement())
        return S("block", (start.line, start.col), tuple(stmts))

    def statement(self) -> S:
        tok = self.tok
        pos = (tok.line, tok.col)
        if self.accept("kw", "var"):
            name = self.expect("id").text
            self.expect("sym", "=")
            e = self.expr()
            self.expect("sym", ";")
            return S("decl", pos, (name, e))
        if self.at("id") and self.at("id", tok=self.peek()) and self.at("sym", "=", tok=self.peek(2)):
            self.i += 1
            name = self.expect("id").text
            self.expect("sym", "=")
            e = self.expr()
            self.expect("sym", ";")
            return S("decl", pos, (name, e))
        if self.at("id") and self.at("sym", "=", tok=self.peek()):
            name = self.expect("id").text
            self.expect("sym", "=")
            e = self.expr()
            self.expect("sym", ";")
            return S("assign", pos, (name, e))
        if self.accept("kw", "return"):
            e = self.expr()
            self.expect("sym", ";")
            return S("return", pos, (e,))
        if self.at("kw", "if"):
            return S("expr", pos, (self.if_expr(),))
        e = self.expr()
        self.expect("sym", ";")
        return S("expr", pos, (e,))

    def if_expr(self) -> S:
        tok = self.expect("kw", "if")
        self.expect("sym", "(")
        left = self.expr()
        if self.accept("sym", "=="):
            negate = False
        elif self.accept("sym", "!="):
            negate = True
        else:
            self.error("expected '==' or '!=' in condition")
        right = self.expr()
        self.expect("sym", ")")
        then = self.block()
        orelse = None
        if self.accept("kw", "else"):
            if self.at("kw", "if"):
                inner = self.if_expr()
                orelse = S("block", inner.pos, (S("expr", inner.pos, (inner,)),))
            else:
                orelse = self.block()
        if negate:
            then, orelse = (orelse, then)
        return S("if", (tok.line, tok.col), (left, right, then, orelse))

    # -- expressions
    def expr(self) -> S:
        lhs = self.concat()
        if self.at("sym", "="):
            eq = self.expect("sym", "=")
            if lhs.kind != "getfield":
                self.error("left side of assignment must be a field access or variable", eq)
            rhs = self.expr()
            obj, fld = lhs.args
            return S("setfield", lhs.pos, (obj, fld, rhs))
        return lhs

    def concat(self) -> S:
        e = self.unary()
        while self.at("sym", "+"):
            tok = self.expect("sym", "+")
            rhs = self.unary()
            e = S("concat", (tok.line, tok.col), (e, rhs))
        return e

    _UNARY_START = {"id", "str"}

    def _starts_unary(self, tok: Tok) -> bool:
        return (tok.kind in self._UNARY_START or (tok.kind == "kw" and tok.text in
                ("new", "null", "this", "if")) or (tok.kind == "sym" and tok.text in "({"))

    def unary(self) -> S:
        if (self.at("sym", "(") and self.at("id", tok=self.peek())
                and self.at("sym", ")", tok=self.peek(2)) and self._starts_unary(self.peek(3))):
            tok = self.expect("sym", "(")
            cls = self.expect("id").text
            self.expect("sym", ")")
            if cls == NULLTYPE:
                self.error("cannot cast to NullType", tok)
            return S("cast", (tok.line, tok.col), (self.unary(), cls))
        return self.postfix()

    def postfix(self) -> S:
        e = self.primary()
        while self.at("sym", "."):
            self.expect("sym", ".")
            name = self.expect("id")
            pos = (name.line, name.col)
            if self.at("sym", "("):
                e = S("invoke", pos, (e, name.text, self.call_args()))
            else:
                e = S("getfield", pos, (e, name.text))
        return e

    def call_args(self) -> tuple:
        self.expect("sym", "(")
        args = []
        if not self.at("sym", ")"):
            while True:
                args.append(self.expr())
                if not self.accept("sym", ","):
                    break
        self.expect("sym", ")")
        return tuple(args)

    def primary(self) -> S:
        tok = self.tok
        pos = (tok.line, tok.col)
        if tok.kind == "id":
            self.i += 1
            if self.at("sym", "("):
                return S("builtin", pos, (tok.text, self.call_args()))
            return S("var", pos, (tok.text,))
        if tok.kind == "str":
            self.i += 1
            return S("str", pos, (tok.text,))
        if self.accept("kw", "this"):
            return S("var", pos, (THIS,))
        if self.accept("kw", "null"):
            return S("null", pos)
        if self.accept("kw", "new"):
            cls = self.expect("id")
            if cls.text in (STRING, NULLTYPE):
                self.error(f"cannot instantiate {cls.text}", cls)
            self.expect("sym", "(")
            self.expect("sym", ")")
            return S("new", pos, (cls.text,))
        if self.at("kw", "if"):
            return self.if_expr()
        if self.at("sym", "{"):
            return self.block()
        if self.accept("sym", "("):
            e = self.expr()
            self.expect("sym", ")")
            return e
        got = repr(tok.text) if tok.kind != "eof" else "end of input"
        self.error(f"expected an expression, found {got}")


# --------------------------------------------------------------------------
# Let-normalization
# --------------------------------------------------------------------------


class _Normalizer:
    def __init__(self, used: set[str]):
        self.used = set(used)
        self.counter = 0
        self.positions: dict[int, Pos] = {}
        self.depth = 0

    def fresh(self) -> str:
        while True:
            self.counter += 1
            name = f"t${self.counter}"
            if name not in self.used:
                self.used.add(name)
                return name

    def mk(self, node: Expr, pos: Pos) -> Expr:
        self.positions[id(node)] = pos
        return node

    def lookup(self, s: S, env: dict) -> str:
        name = s.args[0]
        if name not in env:
            raise ParseError(f"undeclared variable {name}", *s.pos)
        return env[name]

    def atom(self, s: S, env: dict, binds: list) -> str:
        if s.kind == "var":
            return self.lookup(s, env)
        v = self.fresh()
        binds.append((v, self.expr(s, env), s.pos))
        return v

    def wrap(self, binds: list, body: Expr) -> Expr:
        for v, bound, pos in reversed(binds):
            body = self.mk(Let(v, bound, body), pos)
        return body

    def expr(self, s: S, env: dict) -> Expr:
        k, pos, a = s.kind, s.pos, s.args
        if k == "var":
            return self.mk(Var(self.lookup(s, env)), pos)
        if k == "null":
            return self.mk(Null(), pos)
        if k == "str":
            return self.mk(StrLit(a[0]), pos)
        if k == "new":
            return self.mk(New(a[0]), pos)
        if k == "cast":
            return self.mk(Cast(self.expr(a[0], env), a[1]), pos)
        if k == "block":
            return self.block(a, env)
        binds: list = []
        if k == "getfield":
            node = GetField(self.atom(a[0], env, binds), a[1])
        elif k == "setfield":
            obj = self.atom(a[0], env, binds)
            node = SetField(obj, a[1], self.atom(a[2], env, binds))
        elif k == "invoke":
            obj = self.atom(a[0], env, binds)
            node = Invoke(obj, a[1], tuple(self.atom(x, env, binds) for x in a[2]))
        elif k == "builtin":
            node = Builtin(a[0], tuple(self.atom(x, env, binds) for x in a[1]))
        elif k == "concat":
            left = self.atom(a[0], env, binds)
            node = Concat(left, self.atom(a[1], env, binds))
        elif k == "if":
            left = self.atom(a[0], env, binds)
            right = self.atom(a[1], env, binds)
            then = self.block(a[2].args, env) if a[2] is not None else self.mk(Null(), pos)
            orelse = self.block(a[3].args, env) if a[3] is not None else self.mk(Null(), pos)
            node = IfEq(left, right, then, orelse)
        else:  # pragma: no cover - parser only builds the kinds above
            raise ParseError(f"unknown surface form {k}", *pos)
        return self.wrap(binds, self.mk(node, pos))

    def block(self, stmts: tuple, env: dict) -> Expr:
        self.depth += 1
        try:
            return self._block(stmts, env)
        finally:
            self.depth -= 1

    def _block(self, stmts: tuple, env: dict) -> Expr:
        env = dict(env)
        declared: set[str] = set()
        pending: list = []
        final: Optional[Expr] = None
        for idx, st in enumerate(stmts):
            last = idx == len(stmts) - 1
            if st.kind == "decl":
                name, e = st.args
                pending.append((name, self.expr(e, env), st.pos))
                env[name] = name
                declared.add(name)
                self.used.add(name)
            elif st.kind == "assign":
                name, e = st.args
                if name not in env:
                    raise ParseError(f"assignment to undeclared variable {name}", *st.pos)
                if self.depth > 1 and name not in declared:
                    raise ParseError(f"assignment to {name} inside a nested block would not be "
                                     f"visible after it; bind the block's value instead", *st.pos)
                pending.append((env[name], self.expr(e, env), st.pos))
            elif st.kind == "return":
                if not last:
                    raise ParseError("unreachable statement after return", *stmts[idx + 1].pos)
                final = self.expr(st.args[0], env)
            else:
                e = self.expr(st.args[0], env)
                if last:
                    final = e
                else:
                    pending.append(("_", e, st.pos))
        if final is None:
            final = self.mk(Null(), stmts[-1].pos if stmts else (0, 0))
        return self.wrap(pending, final)


def _surface_names(s, out: set):
    if isinstance(s, S):
        if s.kind in ("var", "decl", "assign") and isinstance(s.args[0], str):
            out.add(s.args[0])
        for x in s.args:
            _surface_names(x, out)
    elif isinstance(s, tuple):
        for x in s:
            _surface_names(x, out)


# --------------------------------------------------------------------------
# Program construction
# --------------------------------------------------------------------------


def build_program(decls: list[ClassDecl], check: bool = True) -> Program:
    """Resolve inheritance, label bodies in declaration order and check the result."""
    byname: dict[str, ClassDecl] = {}
    for d in decls:
        if d.name in (OBJECT, STRING, NULLTYPE):
            raise ParseError(f"cannot redeclare built-in class {d.name}", *d.pos)
        if d.name in byname:
            raise ParseError(f"class {d.name} declared twice", *d.pos)
        byname[d.name] = d
    for d in decls:
        if d.parent not in byname and d.parent != OBJECT:
            if d.parent in (STRING, NULLTYPE):
                raise ParseError(f"class {d.name} may not extend {d.parent}", *d.pos)
            raise ParseError(f"class {d.name} extends unknown class {d.parent}", *d.pos)

    arity: dict[str, int] = {}
    for d in decls:
        for m in d.methods:
            n = len(m.params)
            if arity.setdefault(m.name, n) != n:
                raise ParseError(f"method {m.name} declared with {n} parameters; "
                                 f"overloading is not supported", *m.pos)

    # labels in declaration order
    counter = 1
    positions: dict[int, Pos] = {}
    bodies: dict[tuple[str, str], Expr] = {}
    for d in decls:
        seen = set()
        for m in d.methods:
            if m.name in seen:
                raise ParseError(f"method {d.name}.{m.name} declared twice", *m.pos)
            seen.add(m.name)
            nodes = list(walk(m.body))
            body, nxt = label_expr(m.body, counter)
            for k, node in enumerate(nodes):
                if id(node) in m.positions:
                    positions[counter + k] = m.positions[id(node)]
            counter = nxt
            bodies[(d.name, m.name)] = body

    # inheritance, parents first
    fields: dict[str, frozenset] = {OBJECT: frozenset(), STRING: frozenset()}
    methods: dict[str, frozenset] = {OBJECT: frozenset(), STRING: frozenset()}
    mtable: dict[tuple[str, str], Expr] = {}
    F0: dict[tuple[str, str], str] = {}
    M0: dict[tuple[str, str], tuple[tuple[str, ...], str]] = {}
    done: set[str] = set()

    def resolve(name: str, trail: tuple = ()):
        if name in done or name == OBJECT:
            return
        if name in trail:
            raise IllFormedProgram([f"subclass relation not a tree: cycle through {name}"])
        d = byname[name]
        resolve(d.parent, trail + (name,))
        pf = fields.get(d.parent, frozenset())
        pm = methods.get(d.parent, frozenset())
        own_fields = set()
        for f, t, *rest in d.fields:
            if f in pf or f in own_fields:
                raise ParseError(f"field {f} redeclared in {name}", *(rest[0] if rest else d.pos))
            own_fields.add(f)
            F0[(name, f)] = t
        for f in pf:
            F0[(name, f)] = F0[(d.parent, f)]
        fields[name] = pf | own_fields
        own = {m.name: m for m in d.methods}
        methods[name] = pm | frozenset(own)
        for m in pm:
            if m not in own:
                mtable[(name, m)] = mtable[(d.parent, m)]
                M0[(name, m)] = M0[(d.parent, m)]
        for m in d.methods:
            mtable[(name, m.name)] = bodies[(name, m.name)]
            M0[(name, m.name)] = (tuple(t for _, t, *_ in m.params), m.result)
        done.add(name)

    for d in decls:
        resolve(d.name)

    subclass = frozenset([(d.name, d.parent) for d in decls] + [(STRING, OBJECT)])
    p = Program(classes=frozenset(byname), subclass=subclass,
                fields={c: frozenset(v) for c, v in fields.items()},
                methods={c: frozenset(v) for c, v in methods.items()},
                mtable=mtable, arity=arity, std=StdClassTable(F0, M0),
                positions=positions)
    if check:
        diags = check_wellformed(p)
        known = p.all_classes
        for (c, f), t in F0.items():
            if t not in known:
                diags.append(f"field {c}.{f} has unknown type {t}")
        for (c, m), (ps, r) in M0.items():
            for t in ps + (r,):
                if t not in known:
                    diags.append(f"method {c}.{m} mentions unknown type {t}")
        if diags:
            raise IllFormedProgram(sorted(set(diags)))
    return p


def parse_program(text: str, check: bool = True) -> Program:
    raw = _Parser(text).program()
    decls = []
    for name, parent, fields, methods, pos in raw:
        mdecls = []
        for mname, params, result, body, mpos in methods:
            env = {THIS: THIS}
            for i, (pn, _, ppos) in enumerate(params, 1):
                if pn in env:
                    raise ParseError(f"duplicate parameter {pn}", *ppos)
                env[pn] = param_name(i)
            used: set[str] = set(env.values())
            _surface_names(body, used)
            norm = _Normalizer(used)
            core = norm.block(body.args, env)
            mdecls.append(MethodDecl(mname, [(pn, t) for pn, t, _ in params], result,
                                     core, mpos, norm.positions))
        decls.append(ClassDecl(name, parent, list(fields), mdecls, pos))
    return build_program(decls, check=check)


# --------------------------------------------------------------------------
# Pretty printing
# --------------------------------------------------------------------------


def _is_block_value(e: Expr) -> bool:
    return isinstance(e, Let)


def pretty_expr(e: Expr, indent: int = 0) -> str:
    """Render a core expression as a surface expression."""
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Null):
        return "null"
    if isinstance(e, StrLit):
        return escape(e.text)
    if isinstance(e, New):
        return f"new {e.cls}()"
    if isinstance(e, GetField):
        return f"{e.obj}.{e.fld}"
    if isinstance(e, SetField):
        return f"{e.obj}.{e.fld} = {e.value}"
    if isinstance(e, Invoke):
        return f"{e.obj}.{e.method}({', '.join(e.args)})"
    if isinstance(e, Builtin):
        return f"{e.fn}({', '.join(e.args)})"
    if isinstance(e, Concat):
        return f"{e.left} + {e.right}"
    if isinstance(e, Cast):
        inner = pretty_expr(e.expr, indent)
        if isinstance(e.expr, (Concat, SetField)):
            inner = f"({inner})"
        return f"({e.cls}) {inner}"
    if isinstance(e, IfEq):
        return (f"if ({e.left} == {e.right}) {pretty_block(e.then, indent)} "
                f"else {pretty_block(e.orelse, indent)}")
    if isinstance(e, Let):
        return pretty_block(e, indent)
    raise TypeError(f"not an expression: {e!r}")


def pretty_block(e: Expr, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    lines = []
    node = e
    while isinstance(node, Let):
        bound = pretty_expr(node.bound, indent + 1)
        if node.var == "_":
            lines.append(pad + (bound if isinstance(node.bound, IfEq) else bound + ";"))
        else:
            lines.append(f"{pad}var {node.var} = {bound};")
        node = node.body
    if isinstance(node, IfEq):
        lines.append(pad + pretty_expr(node, indent + 1))
    else:
        lines.append(f"{pad}return {pretty_expr(node, indent + 1)};")
    return "{\n" + "\n".join(lines) + "\n" + "  " * indent + "}"


def _own_methods(p: Program, c: str) -> list[str]:
    parent = p.parent.get(c)
    out = []
    for m in p.methods.get(c, ()):
        if parent is None or m not in p.methods.get(parent, ()) or \
                p.mtable[(c, m)] is not p.mtable[(parent, m)]:
            out.append(m)
    return out


def pretty_print(p: Program) -> str:
    """Source text that parses back to ``p`` (labels included when ``p`` came from the parser)."""
    std = p.std or StdClassTable({}, {})

    def first_label(c):
        labs = [p.mtable[(c, m)].label for m in _own_methods(p, c)]
        labs = [x for x in labs if x is not None]
        return min(labs) if labs else float("inf")

    classes = sorted(p.classes, key=lambda c: (first_label(c), c))
    chunks = []
    for c in classes:
        parent = p.parent.get(c, OBJECT)
        head = f"class {c}" + (f" extends {parent}" if parent != OBJECT else "") + " {"
        lines = [head]
        inherited = p.fields.get(parent, frozenset())
        for f in sorted(p.fields.get(c, ()) - inherited):
            lines.append(f"  {std.F0.get((c, f), OBJECT)} {f};")
        for m in sorted(_own_methods(p, c), key=lambda m: (p.mtable[(c, m)].label or 0, m)):
            params, result = std.M0.get((c, m), ((OBJECT,) * p.arity[m], OBJECT))
            ps = ", ".join(f"{t} {param_name(i)}" for i, t in enumerate(params, 1))
            lines.append(f"  {result} {m}({ps}) {pretty_block(p.mtable[(c, m)], 1)}")
        lines.append("}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"


def programs_equal(p1: Program, p2: Program) -> bool:
    return (p1.classes == p2.classes and p1.subclass == p2.subclass
            and dict(p1.fields) == dict(p2.fields) and dict(p1.methods) == dict(p2.methods)
            and dict(p1.mtable) == dict(p2.mtable) and dict(p1.arity) == dict(p2.arity)
            and (p1.std is None) == (p2.std is None)
            and (p1.std is None or (dict(p1.std.F0) == dict(p2.std.F0)
                                    and dict(p1.std.M0) == dict(p2.std.M0))))


# --------------------------------------------------------------------------
# Policy files
# --------------------------------------------------------------------------

_PTOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<str>"(?:\\.|[^"\\])*")
  | (?P<evt>\[\$\d+\])
  | (?P<arg>\$\d+)
  | (?P<fn>[A-Za-z_]\w*\(\$\d+\))
  | (?P<sym>[;|{},()=*]|->)
  | (?P<word>[^\s;|"{},()=]+)
""", re.VERBOSE)

SECTIONS = ("alphabet", "monoid", "automaton", "allowed", "lit2word", "builtins", "pool")


def _ptokens(line: str, lineno: int) -> list[tuple[str, str]]:
    out = []
    pos = 0
    while pos < len(line):
        m = _PTOKEN.match(line, pos)
        if not m:
            raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        if m.lastgroup != "ws":
            text = m.group()
            if m.lastgroup == "str":
                text = unescape(text[1:-1], lineno, pos + 1)
            out.append((m.lastgroup, text))
        pos = m.end()
    return out


def _strip_comment(line: str) -> str:
    in_str = False
    esc = False
    for i, ch in enumerate(line):
        if esc:
            esc = False
        elif ch == "\\":
            esc = in_str
        elif ch == '"':
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


def parse_policy(text: str, name: str = "policy") -> Policy:
    """Parse the sectioned policy format (see the bundled ``*.policy`` files)."""
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            current = m.group(1)
            if current not in SECTIONS:
                raise ParseError(f"unknown section [{current}]", lineno, 1)
            if current in sections:
                raise ParseError(f"section [{current}] given twice", lineno, 1)
            sections[current] = []
            continue
        if current is None:
            raise ParseError("text before the first section", lineno, 1)
        sections[current].append((lineno, line))

    if "alphabet" not in sections:
        raise PolicyError("missing [alphabet] section")
    alphabet: list[str] = []
    for lineno, line in sections["alphabet"]:
        for kind, tok in _ptokens(line, lineno):
            if kind != "word":
                raise ParseError(f"bad letter {tok!r}", lineno, 1)
            if tok in alphabet:
                raise ParseError(f"letter {tok} declared twice", lineno, 1)
            alphabet.append(tok)
    alpha = tuple(alphabet)

    def letter(tok: str, lineno: int) -> str:
        if tok not in alpha:
            raise ParseError(f"unknown alphabet symbol {tok}", lineno, 1)
        return tok

    automaton = _parse_automaton(sections["automaton"], alpha, letter) if "automaton" in sections else None
    if "monoid" in sections:
        monoid, hom = _parse_monoid(sections["monoid"], alpha, letter)
        if "allowed" not in sections:
            raise PolicyError("a [monoid] policy needs an [allowed] section")
        allowed = frozenset(monoid.index(tok) for ln, line in sections["allowed"]
                            for _, tok in _ptokens(line, ln))
        if automaton is not None:
            _check_agreement(monoid, hom, allowed, automaton)
    elif automaton is not None:
        monoid, hom, allowed = transition_monoid(automaton)
        if "allowed" in sections:
            raise PolicyError("[allowed] is derived from the automaton; remove the section")
    else:
        raise PolicyError("policy needs a [monoid] or an [automaton] section")

    rules = []
    for lineno, line in sections.get("lit2word", []):
        toks = _ptokens(line, lineno)
        if toks[0] == ("word", "default"):
            kind, pat, rest = "default", "", toks[1:]
        elif toks[0][1] in ("exact", "prefix") and len(toks) > 1 and toks[1][0] == "str":
            kind, pat, rest = toks[0][1], toks[1][1], toks[2:]
        else:
            raise ParseError("lit2word rule must be: default|exact \"s\"|prefix \"s\" = word", lineno, 1)
        if not rest or rest[0] != ("sym", "="):
            raise ParseError("expected '=' in lit2word rule", lineno, 1)
        word = tuple(letter(t, lineno) for _, t in rest[1:] if t != "eps")
        rules.append(Lit2WordRule(kind, pat, word))

    pool = tuple(tok for ln, line in sections.get("pool", []) for kind, tok in _ptokens(line, ln))
    builtins, typings = _parse_builtins(sections.get("builtins", []), letter)
    resolved = {}
    for fn, b in builtins.items():
        table = {}
        for lineno, args, tags, effs in typings.get(fn, []):
            if len(args) != b.arity:
                raise ParseError(f"typing of {fn} has {len(args)} arguments, arity is {b.arity}", lineno, 1)
            table[tuple(monoid.index(a) for a in args)] = (
                frozenset(monoid.index(t) for t in tags), frozenset(monoid.index(t) for t in effs))
        resolved[fn] = BuiltinSpec(fn, b.arity, b.outcomes, table)
    for fn in typings:
        if fn not in builtins:
            raise ParseError(f"typing given for undeclared builtin {fn}", typings[fn][0][0], 1)
    return Policy(alpha, monoid, hom, allowed, tuple(rules), resolved, automaton,
                  pool or ("input",), name)


def _parse_monoid(lines, alpha, letter):
    names: list[str] = []
    neutral = None
    products: dict[tuple[str, str], str] = {}
    homs: dict[str, str] = {}
    for lineno, line in lines:
        toks = [t for _, t in _ptokens(line, lineno)]
        if toks[0] == "elements":
            names.extend(toks[1:])
        elif toks[0] == "neutral" and len(toks) == 2:
            neutral = toks[1]
        elif toks[0] == "hom" and len(toks) == 4 and toks[2] == "=":
            homs[letter(toks[1], lineno)] = toks[3]
        elif len(toks) == 5 and toks[1] == "*" and toks[3] == "=":
            products[(toks[0], toks[2])] = toks[4]
        else:
            raise ParseError(f"cannot parse monoid line {line!r}", lineno, 1)
    if neutral is None:
        raise PolicyError("monoid needs a neutral element")
    idx = {n: i for i, n in enumerate(names)}
    for n in [neutral, *homs.values(), *[x for k, v in products.items() for x in (*k, v)]]:
        if n not in idx:
            raise PolicyError(f"unknown monoid element {n}")
    table = np.full((len(names), len(names)), -1, dtype=np.int64)
    for (a, b), c in products.items():
        table[idx[a], idx[b]] = idx[c]
    for a in names:  # the neutral row/column may be left implicit
        for x, y in ((neutral, a), (a, neutral)):
            if table[idx[x], idx[y]] < 0:
                table[idx[x], idx[y]] = idx[a]
    if (table < 0).any():
        a, b = np.argwhere(table < 0)[0]
        raise PolicyError(f"multiplication not total: {names[a]} * {names[b]} missing")
    missing = [x for x in alpha if x not in homs]
    if missing:
        raise PolicyError(f"homomorphism undefined on letter {missing[0]}")
    m = Monoid(tuple(names), table, idx[neutral])
    return m, {x: idx[v] for x, v in homs.items()}


def _parse_automaton(lines, alpha, letter) -> PolicyAutomaton:
    states: list[str] = []
    initial = None
    accepting: set[str] = set()
    trans: dict[tuple[str, str], str] = {}
    wild: dict[str, str] = {}
    for lineno, line in lines:
        toks = [t for _, t in _ptokens(line, lineno)]
        if toks[0] == "states":
            states.extend(toks[1:])
        elif toks[0] == "initial" and len(toks) == 2:
            initial = toks[1]
        elif toks[0] == "accepting":
            accepting.update(toks[1:])
        elif len(toks) >= 4 and toks[-2] == "->":
            q, target = toks[0], toks[-1]
            for x in toks[1:-2]:
                if x == "*":
                    wild[q] = target
                else:
                    key = (q, letter(x.rstrip(","), lineno))
                    if key in trans:
                        raise ParseError(f"duplicate transition {q} {x}", lineno, 1)
                    trans[key] = target
        else:
            raise ParseError(f"cannot parse automaton line {line!r}", lineno, 1)
    for q in [initial, *accepting, *[k[0] for k in trans], *trans.values(), *wild, *wild.values()]:
        if q not in states:
            raise PolicyError(f"unknown automaton state {q}")
    for q, target in wild.items():
        for x in alpha:
            trans.setdefault((q, x), target)
    return PolicyAutomaton(tuple(states), alpha, initial, trans, frozenset(accepting))


def _check_agreement(monoid, hom, allowed, a: PolicyAutomaton) -> None:
    """Both descriptions classify every word alike (exact, via the product graph)."""
    start = (monoid.neutral, a.initial)
    seen = {start}
    stack = [(start, ())]
    while stack:
        (u, q), word = stack.pop()
        if (u in allowed) != (q in a.accepting):
            raise PolicyError(f"monoid and automaton disagree on word {' '.join(word) or 'eps'}")
        for x in a.alphabet:
            nxt = (monoid.mul(u, hom[x]), a.transition[(q, x)])
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, word + (x,)))


def _parse_word(toks, letter, lineno, arity):
    items = []
    for kind, t in toks:
        if kind == "word" and t == "eps":
            continue
        if kind == "arg" or kind == "evt":
            i = int(t.strip("[]$"))
            if not 1 <= i <= arity:
                raise ParseError(f"argument ${i} out of range", lineno, 1)
            items.append(ArgWord(i) if kind == "arg" else ArgClassLetter(i))
        elif kind == "word":
            items.append(Letter(letter(t, lineno)))
        else:
            raise ParseError(f"unexpected {t!r} in word", lineno, 1)
    return tuple(items)


def _parse_text(toks, lineno, arity):
    if len(toks) != 1:
        raise ParseError("outcome text must be a single item", lineno, 1)
    kind, t = toks[0]
    if kind == "str":
        return TextLit(t)
    if kind == "word" and t == "fresh":
        return TextFresh()
    if kind == "arg":
        i = int(t[1:])
        if not 1 <= i <= arity:
            raise ParseError(f"argument ${i} out of range", lineno, 1)
        return TextArg(i)
    if kind == "fn":
        fn, _, rest = t.partition("(")
        if fn not in TEXT_FUNCTIONS:
            raise ParseError(f"unknown text function {fn}", lineno, 1)
        i = int(rest.rstrip(")")[1:])
        if not 1 <= i <= arity:
            raise ParseError(f"argument ${i} out of range", lineno, 1)
        return TextFn(fn, i)
    raise ParseError(f"bad outcome text {t!r}", lineno, 1)


def _split(toks, sep):
    parts, cur = [], []
    for tok in toks:
        if tok == ("sym", sep):
            parts.append(cur)
            cur = []
        else:
            cur.append(tok)
    parts.append(cur)
    return parts


def _parse_builtins(lines, letter):
    builtins: dict[str, BuiltinSpec] = {}
    typings: dict[str, list] = {}
    for lineno, line in lines:
        toks = _ptokens(line, lineno)
        if toks[0] == ("word", "typing"):
            # typing fn(A, B) = {X, Y} ; {Z}
            if len(toks) < 4 or toks[1][0] != "word" or toks[2] != ("sym", "("):
                raise ParseError("typing line must be: typing fn(args) = {tags} ; {effects}", lineno, 1)
            fn = toks[1][1]
            close = toks.index(("sym", ")"))
            args = [t for k, t in toks[3:close] if k == "word"]
            rest = toks[close + 1:]
            if not rest or rest[0] != ("sym", "="):
                raise ParseError("expected '=' in typing line", lineno, 1)
            halves = _split(rest[1:], ";")
            if len(halves) != 2:
                raise ParseError("typing needs result tags and effects separated by ';'", lineno, 1)
            sets = [[t for k, t in h if k == "word"] for h in halves]
            typings.setdefault(fn, []).append((lineno, args, sets[0], sets[1]))
            continue
        if toks[0][0] != "word" or "/" not in toks[0][1]:
            raise ParseError("builtin line must start with name/arity", lineno, 1)
        fn, _, ar = toks[0][1].partition("/")
        if not ar.isdigit():
            raise ParseError(f"bad arity {ar!r}", lineno, 1)
        arity = int(ar)
        if fn in builtins:
            raise ParseError(f"builtin {fn} declared twice", lineno, 1)
        if len(toks) < 2 or toks[1] != ("sym", "="):
            raise ParseError("expected '=' after builtin name", lineno, 1)
        outcomes = []
        for alt in _split(toks[2:], "|"):
            parts = _split(alt, ";")
            if len(parts) != 3:
                raise ParseError("outcome must be: text ; word ; trace", lineno, 1)
            outcomes.append(Outcome(_parse_text(parts[0], lineno, arity),
                                    _parse_word(parts[1], letter, lineno, arity),
                                    _parse_word(parts[2], letter, lineno, arity)))
        builtins[fn] = BuiltinSpec(fn, arity, tuple(outcomes))
    return builtins, typings


def load_policy(path) -> Policy:
    from pathlib import Path
    path = Path(path)
    return parse_policy(path.read_text(encoding="utf-8"), name=path.stem)


def load_program(path) -> Program:
    from pathlib import Path
    return parse_program(Path(path).read_text(encoding="utf-8"))


__all__ = ["ParseError", "IllFormedProgram", "parse_program", "parse_policy", "pretty_print",
           "pretty_expr", "build_program", "ClassDecl", "MethodDecl", "programs_equal",
           "load_policy", "load_program", "tokenize", "escape", "unescape"]
